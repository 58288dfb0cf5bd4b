//! Fixed-width bit vectors, the unit of IP input/output each cycle.
//!
//! Bit index 0 is the least-significant bit. Every module in this crate
//! follows that convention.

use std::fmt;

use rand::RngCore;

use crate::error::Error;

/// Maximum supported word width in bits.
pub const MAX_WIDTH: usize = 256;

const LIMBS: usize = MAX_WIDTH / 64;

/// A fixed-width bit vector (1..=256 bits). Width is fixed for a scenario;
/// all IP variants in one scenario share it.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    limbs: [u64; LIMBS],
    width: u16,
}

impl Word {
    /// All-zero word of the given width.
    pub fn zero(width: usize) -> Self {
        assert!(
            (1..=MAX_WIDTH).contains(&width),
            "word width {width} out of range 1..={MAX_WIDTH}"
        );
        Word {
            limbs: [0; LIMBS],
            width: width as u16,
        }
    }

    /// Checked constructor used by configuration loading.
    pub fn try_zero(width: usize) -> Result<Self, Error> {
        if (1..=MAX_WIDTH).contains(&width) {
            Ok(Self::zero(width))
        } else {
            Err(Error::WidthOutOfRange(width))
        }
    }

    /// Builds a word from the low `width` bits of `value`.
    pub fn from_u64(value: u64, width: usize) -> Self {
        let mut w = Self::zero(width);
        w.limbs[0] = value;
        w.mask_top();
        w
    }

    /// Low 64 bits of the word. Lossless for widths up to 64.
    pub fn to_u64(&self) -> u64 {
        self.limbs[0]
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn bit(&self, index: usize) -> bool {
        debug_assert!(index < self.width());
        (self.limbs[index / 64] >> (index % 64)) & 1 == 1
    }

    pub fn set_bit(&mut self, index: usize, value: bool) {
        debug_assert!(index < self.width());
        let mask = 1u64 << (index % 64);
        if value {
            self.limbs[index / 64] |= mask;
        } else {
            self.limbs[index / 64] &= !mask;
        }
    }

    /// Bitwise XOR; both words must share a width.
    pub fn xor(&self, other: &Word) -> Word {
        debug_assert_eq!(self.width, other.width);
        let mut out = *self;
        for (l, r) in out.limbs.iter_mut().zip(other.limbs.iter()) {
            *l ^= r;
        }
        out
    }

    /// Uniformly random word drawn from `rng`.
    pub fn random(rng: &mut impl RngCore, width: usize) -> Self {
        let mut w = Self::zero(width);
        for limb in w.limbs.iter_mut() {
            *limb = rng.next_u64();
        }
        w.mask_top();
        w
    }

    /// Rotates the bit pattern left by `n` positions within the word width.
    pub fn rotate_left(&self, n: usize) -> Word {
        let width = self.width();
        let n = n % width;
        let mut out = Self::zero(width);
        for i in 0..width {
            out.set_bit((i + n) % width, self.bit(i));
        }
        out
    }

    /// Bits in LSB-first order.
    pub fn iter_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width()).map(|i| self.bit(i))
    }

    /// Renders as `0x…` with exactly ceil(width/4) nibbles.
    pub fn to_hex(&self) -> String {
        let nibbles = self.width().div_ceil(4);
        let mut s = String::with_capacity(nibbles + 2);
        s.push_str("0x");
        for n in (0..nibbles).rev() {
            let mut v = 0u8;
            for b in 0..4 {
                let idx = n * 4 + b;
                if idx < self.width() && self.bit(idx) {
                    v |= 1 << b;
                }
            }
            s.push(char::from_digit(v as u32, 16).unwrap().to_ascii_uppercase());
        }
        s
    }

    /// Parses a `0x…` hex literal into a word of the given width. Bits above
    /// the width must be zero.
    pub fn from_hex(text: &str, width: usize) -> Result<Self, Error> {
        let digits = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .ok_or_else(|| Error::BadWordLiteral(text.to_string()))?;
        if digits.is_empty() || digits.len() > MAX_WIDTH / 4 {
            return Err(Error::BadWordLiteral(text.to_string()));
        }
        let mut w = Self::try_zero(width)?;
        for (pos, c) in digits.chars().rev().enumerate() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::BadWordLiteral(text.to_string()))?;
            for b in 0..4 {
                if v >> b & 1 == 1 {
                    let idx = pos * 4 + b;
                    if idx >= width {
                        return Err(Error::BadWordLiteral(format!(
                            "{text} does not fit in {width} bits"
                        )));
                    }
                    w.set_bit(idx, true);
                }
            }
        }
        Ok(w)
    }

    fn mask_top(&mut self) {
        let width = self.width();
        for (i, limb) in self.limbs.iter_mut().enumerate() {
            let lo = i * 64;
            if lo >= width {
                *limb = 0;
            } else if width - lo < 64 {
                *limb &= (1u64 << (width - lo)) - 1;
            }
        }
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word<{}>({})", self.width, self.to_hex())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
