//! 5-bit CRC with generator x^5 + x^2 + 1, computed per 8-bit block.
//!
//! Conventions, frozen so voters and loggers interoperate bit-exactly:
//! message bits enter MSB-first, the register starts at zero, there is no
//! input/output reflection and no final XOR. The value is the remainder of
//! block * x^5 divided by the generator over GF(2).
//!
//! Blocks are formed LSB-first from the word/cycle stream, matching the
//! fabric-wide bit-0-is-LSB convention: the first bit to arrive becomes
//! bit 0 of the block.

use std::fmt;

use crate::word::Word;

/// Generator x^5 + x^2 + 1, low five bits (the x^5 term is implicit).
const POLY: u8 = 0b0_0101;

/// A 5-bit CRC remainder (always < 32).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrcValue(u8);

impl CrcValue {
    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Debug for CrcValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CrcValue(0x{:02X})", self.0)
    }
}

impl fmt::Display for CrcValue {
    /// Two-digit hex, the rendering used in all logs and reports.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:02X}", self.0)
    }
}

/// CRC of a single 8-bit block.
pub fn crc5(block: u8) -> CrcValue {
    let mut reg = 0u8;
    for i in (0..8).rev() {
        let bit = (block >> i) & 1;
        let top = (reg >> 4) & 1;
        reg = (reg << 1) & 0x1F;
        if top ^ bit == 1 {
            reg ^= POLY;
        }
    }
    CrcValue(reg)
}

/// Accumulates a bit stream into 8-bit blocks and emits one CRC per
/// completed block. A partial trailing block is held, not emitted.
#[derive(Clone, Debug, Default)]
pub struct Crc5Stream {
    pending: u8,
    pending_bits: u8,
}

impl Crc5Stream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one word (its bits LSB-first) and returns the CRCs of every
    /// block completed by it, in completion order.
    pub fn feed(&mut self, word: &Word) -> Vec<CrcValue> {
        let mut out = Vec::new();
        for bit in word.iter_bits() {
            if bit {
                self.pending |= 1 << self.pending_bits;
            }
            self.pending_bits += 1;
            if self.pending_bits == 8 {
                out.push(crc5(self.pending));
                self.pending = 0;
                self.pending_bits = 0;
            }
        }
        out
    }

    /// Number of bits currently held in the partial block.
    pub fn pending_bits(&self) -> usize {
        self.pending_bits as usize
    }

    /// Drops any partial block, restoring block alignment.
    pub fn reset(&mut self) {
        self.pending = 0;
        self.pending_bits = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: long division of block * x^5 by x^5 + x^2 + 1
    /// over GF(2), on an explicit bit vector.
    fn crc5_division_oracle(block: u8) -> u8 {
        // dividend coefficients, index 0 = highest degree (x^12)
        let mut bits = [false; 13];
        for i in 0..8 {
            bits[7 - i] = (block >> i) & 1 == 1;
        }
        // generator 100101 (x^5 + x^2 + 1)
        let gen = [true, false, false, true, false, true];
        for start in 0..8 {
            if bits[start] {
                for (k, g) in gen.iter().enumerate() {
                    bits[start + k] ^= g;
                }
            }
        }
        let mut rem = 0u8;
        for i in 0..5 {
            rem = (rem << 1) | (bits[8 + i] as u8);
        }
        rem
    }

    #[test]
    fn zero_block_zero_crc() {
        assert_eq!(crc5(0x00).value(), 0x00);
    }

    #[test]
    fn derived_values_match_division_oracle() {
        // x^5 mod g = x^2 + 1
        assert_eq!(crc5_division_oracle(0x01), 0x05);
        assert_eq!(crc5(0x01).value(), 0x05);
        // x^12 mod g = x^3 + x^2 + x
        assert_eq!(crc5_division_oracle(0x80), 0x0E);
        assert_eq!(crc5(0x80).value(), 0x0E);
    }

    #[test]
    fn matches_oracle_exhaustively() {
        for block in 0..=255u8 {
            assert_eq!(
                crc5(block).value(),
                crc5_division_oracle(block),
                "block {block:#04X}"
            );
        }
    }

    #[test]
    fn detects_every_single_bit_flip() {
        // 256 blocks x 8 flips = 2048 cases
        for block in 0..=255u8 {
            let base = crc5(block);
            for flip in 0..8 {
                let flipped = block ^ (1 << flip);
                assert_ne!(crc5(flipped), base, "block {block:#04X} flip {flip}");
            }
        }
    }

    #[test]
    fn linearity_over_full_domain() {
        let c0 = crc5(0).value();
        for a in 0..=255u8 {
            let ca = crc5(a).value();
            for b in 0..=255u8 {
                assert_eq!(crc5(a ^ b).value(), ca ^ crc5(b).value() ^ c0);
            }
        }
    }

    #[test]
    fn stream_block_aligned_equals_per_block() {
        let mut stream = Crc5Stream::new();
        for v in [0x00u8, 0x01, 0x80, 0xA5] {
            let crcs = stream.feed(&Word::from_u64(v as u64, 8));
            assert_eq!(crcs, vec![crc5(v)]);
        }
    }

    #[test]
    fn stream_serial_width_one_emits_at_cycle_eight() {
        let mut stream = Crc5Stream::new();
        // bits of 0x01 LSB-first: 1 then seven 0s
        let mut emitted = Vec::new();
        for cycle in 0..8 {
            let bit = u64::from(cycle == 0);
            let crcs = stream.feed(&Word::from_u64(bit, 1));
            if cycle < 7 {
                assert!(crcs.is_empty(), "no CRC before 8 bits gathered");
            }
            emitted.extend(crcs);
        }
        assert_eq!(emitted, vec![crc5(0x01)]);
    }

    #[test]
    fn stream_wide_word_low_block_first() {
        let mut stream = Crc5Stream::new();
        let crcs = stream.feed(&Word::from_u64(0x80_01, 16));
        assert_eq!(crcs, vec![crc5(0x01), crc5(0x80)]);
    }

    #[test]
    fn reset_drops_partial_block() {
        let mut stream = Crc5Stream::new();
        stream.feed(&Word::from_u64(1, 1));
        assert_eq!(stream.pending_bits(), 1);
        stream.reset();
        assert_eq!(stream.pending_bits(), 0);
        let crcs = stream.feed(&Word::from_u64(0xFF, 8));
        assert_eq!(crcs, vec![crc5(0xFF)]);
    }
}
