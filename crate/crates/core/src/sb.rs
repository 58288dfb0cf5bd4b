//! Output obfuscation and its inverse: the confusion function applied at an
//! untrusted IP's output and undone at the trusted receiver's input.
//!
//! The function works on bit pairs from the LSB up ("first bit" = bit 0).
//! For pair k over bits (A = b[2k], B = b[2k+1]):
//!
//! ```text
//!   out[2k]   = B
//!   out[2k+1] = C,  C = A xor B   for even k
//!                   C = !(A xor B) for odd k
//! ```
//!
//! If the width is odd the leftover last bit is swapped with bit 0 after
//! pair processing. Width 1 passes through unchanged. The inverse recovers
//! A as B xor C (XNOR pairs: !(B xor C)) and shifts B back.
//!
//! For periodic replacement, a function family is formed by composing the
//! base function with distinct fixed bit rotations; composition keeps every
//! member a bijection.

use crate::word::Word;

/// The base confusion function.
pub fn obfuscate(w: &Word) -> Word {
    let width = w.width();
    if width < 2 {
        return *w;
    }
    let mut out = *w;
    for k in 0..width / 2 {
        let a = w.bit(2 * k);
        let b = w.bit(2 * k + 1);
        let c = if k % 2 == 0 { a ^ b } else { !(a ^ b) };
        out.set_bit(2 * k, b);
        out.set_bit(2 * k + 1, c);
    }
    if width % 2 == 1 {
        let last = out.bit(width - 1);
        let first = out.bit(0);
        out.set_bit(width - 1, first);
        out.set_bit(0, last);
    }
    out
}

/// Exact inverse of [`obfuscate`].
pub fn deobfuscate(w: &Word) -> Word {
    let width = w.width();
    if width < 2 {
        return *w;
    }
    let mut out = *w;
    if width % 2 == 1 {
        let last = out.bit(width - 1);
        let first = out.bit(0);
        out.set_bit(width - 1, first);
        out.set_bit(0, last);
    }
    let scrambled = out;
    for k in 0..width / 2 {
        let b = scrambled.bit(2 * k);
        let c = scrambled.bit(2 * k + 1);
        let a = if k % 2 == 0 { b ^ c } else { !(b ^ c) };
        out.set_bit(2 * k, a);
        out.set_bit(2 * k + 1, b);
    }
    out
}

/// An obfuscated sender/receiver channel with periodic function rotation.
///
/// Family member i is `rotate_left(i) . obfuscate`; member 0 is the base
/// function. Sender and receiver derive the active member from the cycle
/// index, so they switch atomically on the same cycle.
#[derive(Clone, Debug)]
pub struct SbChannel {
    family_size: usize,
    period: u64,
}

impl SbChannel {
    /// `period` 0 disables rotation. A family of size 1 makes rotation a
    /// no-op, which [`SbChannel::rotation_effective`] reports for stats.
    pub fn new(family_size: usize, period: u64) -> Self {
        SbChannel {
            family_size: family_size.max(1),
            period,
        }
    }

    pub fn rotation_effective(&self) -> bool {
        self.family_size > 1 && self.period > 0
    }

    /// Index of the active family member at a cycle.
    pub fn fn_index(&self, cycle: u64) -> usize {
        if !self.rotation_effective() {
            return 0;
        }
        ((cycle / self.period) % self.family_size as u64) as usize
    }

    pub fn encode(&self, w: &Word, cycle: u64) -> Word {
        obfuscate(w).rotate_left(self.fn_index(cycle))
    }

    pub fn decode(&self, w: &Word, cycle: u64) -> Word {
        let idx = self.fn_index(cycle);
        let unrotated = w.rotate_left(w.width() - idx % w.width());
        deobfuscate(&unrotated)
    }
}
