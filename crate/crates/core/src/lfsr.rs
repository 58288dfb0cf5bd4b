//! 16-bit maximal-length Fibonacci LFSR, taps {16, 14, 13, 11}.
//!
//! This is the pseudo-random generator behind the key-leak Trojan payload.
//! The tap set is a standard maximal-length choice and is replaceable; the
//! reference bit sequence for seed 0x0001 is frozen in the tests.

use crate::error::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lfsr {
    state: u16,
}

impl Lfsr {
    /// Seeds the register. An all-zero seed is rejected here so that
    /// stepping is total.
    pub fn new(seed: u16) -> Result<Self, Error> {
        if seed == 0 {
            return Err(Error::Config("LFSR seed must be non-zero".into()));
        }
        Ok(Lfsr { state: seed })
    }

    /// Feedback bit for taps 16, 14, 13, 11; state shifts by one.
    pub fn next_bit(&mut self) -> bool {
        let s = self.state;
        let fb = (s ^ (s >> 2) ^ (s >> 3) ^ (s >> 5)) & 1;
        self.state = (s >> 1) | (fb << 15);
        fb == 1
    }

    pub fn state(&self) -> u16 {
        self.state
    }
}
