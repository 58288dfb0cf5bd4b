//! Trojan triggers, payloads, and the attacker oracle that the key-leak
//! payload is designed for.
//!
//! The leak payload replaces the top ceil(W/8) bits of the infected IP's
//! output (the "unused bits" lane) with secret bits XORed against the LFSR
//! stream. An attacker who knows the generator setup undoes that XOR to
//! read the secret back; demonstrating this, and showing that output
//! obfuscation defeats it, is part of the threat model exercised in tests.

use crate::error::Error;
use crate::lfsr::Lfsr;
use crate::word::Word;

/// Activation condition of a Trojan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Trigger {
    /// Fires every cycle.
    Always,
    /// Fires exactly on cycles with odd index (1, 3, 5, ...).
    OddCycles,
    /// Fires on every cycle c where c % n == 0 and c > 0.
    InternalCounter(u64),
    /// Fires on any cycle whose input word equals the pattern.
    ExternalPattern(Word),
}

impl Trigger {
    pub fn fires(&self, cycle: u64, input: &Word) -> bool {
        match self {
            Trigger::Always => true,
            Trigger::OddCycles => cycle % 2 == 1,
            Trigger::InternalCounter(n) => cycle > 0 && cycle.is_multiple_of(*n),
            Trigger::ExternalPattern(pattern) => input == pattern,
        }
    }

    /// Whether the schedule can be replayed without seeing the input stream.
    pub fn input_independent(&self) -> bool {
        !matches!(self, Trigger::ExternalPattern(_))
    }
}

/// Malicious action taken when the trigger fires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Leak `secret` through the top output bits, XORed with the LFSR stream.
    LeakXorPrng { secret: Word, lfsr_seed: u16 },
    /// Flip the masked output bits.
    DisruptFlip { mask: Word },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrojanSpec {
    pub trigger: Trigger,
    pub payload: Payload,
}

/// Number of leak-lane bits for a given word width.
pub fn leak_lane_bits(width: usize) -> usize {
    width.div_ceil(8)
}

/// Per-run mutable Trojan state. Reset whenever the host IP is programmed
/// into a slot.
#[derive(Clone, Debug)]
pub struct TrojanState {
    lfsr: Option<Lfsr>,
    secret_cursor: usize,
}

impl TrojanState {
    pub fn new(spec: &TrojanSpec) -> Result<Self, Error> {
        let lfsr = match &spec.payload {
            Payload::LeakXorPrng { lfsr_seed, .. } => Some(Lfsr::new(*lfsr_seed)?),
            Payload::DisruptFlip { .. } => None,
        };
        Ok(TrojanState {
            lfsr,
            secret_cursor: 0,
        })
    }

    /// Applies the payload to a golden output word for a cycle on which the
    /// trigger fired.
    pub fn apply(&mut self, spec: &TrojanSpec, golden: &Word) -> Word {
        match &spec.payload {
            Payload::DisruptFlip { mask } => golden.xor(mask),
            Payload::LeakXorPrng { secret, .. } => {
                let width = golden.width();
                let lane = leak_lane_bits(width);
                let lfsr = self.lfsr.as_mut().expect("leak payload owns an LFSR");
                let mut out = *golden;
                for j in 0..lane {
                    let key_bit = lfsr.next_bit();
                    let secret_bit = secret.bit(self.secret_cursor);
                    // after all secret bits leaked, repeat from bit 0
                    self.secret_cursor = (self.secret_cursor + 1) % secret.width();
                    out.set_bit(width - lane + j, key_bit ^ secret_bit);
                }
                out
            }
        }
    }
}

/// The paper's adversary: watches the observable output stream, replicates
/// the PRNG setup (generator, taps, seed, trigger schedule, lane layout),
/// and XORs the leak lane to reconstruct the secret bits.
///
/// The multiplexing schemes emit other IPs' words on most cycles; the
/// attacker predicts its own IP's turns, so leak bits land on the right
/// secret positions and the rest are retried on later wraps of the secret
/// cursor. Call [`AttackerOracle::observe`] only on cycles where the
/// infected IP actually ran (its generator advances only then), and never
/// across a reprogram of that IP (a fresh bitstream restarts the
/// generator, which the oracle cannot see).
pub struct AttackerOracle {
    trigger: Trigger,
    lfsr: Lfsr,
    width: usize,
    cursor: usize,
    recovered: Vec<Option<bool>>,
}

impl AttackerOracle {
    pub fn new(spec: &TrojanSpec, width: usize) -> Result<Self, Error> {
        let Payload::LeakXorPrng { secret, lfsr_seed } = &spec.payload else {
            return Err(Error::Config(
                "attacker oracle applies to the leak payload only".into(),
            ));
        };
        Ok(AttackerOracle {
            trigger: spec.trigger.clone(),
            lfsr: Lfsr::new(*lfsr_seed)?,
            width,
            cursor: 0,
            recovered: vec![None; secret.width()],
        })
    }

    /// One cycle of the tapped stream. `observed` is the word the attacker
    /// can read (None when the system emitted nothing); `from_infected` is
    /// whether that word is the infected IP's own output.
    pub fn observe(
        &mut self,
        cycle: u64,
        input: &Word,
        observed: Option<&Word>,
        from_infected: bool,
    ) {
        if !self.trigger.fires(cycle, input) {
            return;
        }
        let lane = leak_lane_bits(self.width);
        for j in 0..lane {
            // consume a key bit per leaked bit to stay in phase
            let key_bit = self.lfsr.next_bit();
            let position = self.cursor;
            self.cursor = (self.cursor + 1) % self.recovered.len();
            if from_infected {
                if let Some(word) = observed {
                    self.recovered[position] = Some(word.bit(self.width - lane + j) ^ key_bit);
                }
            }
        }
    }

    /// Number of secret positions captured so far.
    pub fn bits_recovered(&self) -> usize {
        self.recovered.iter().filter(|b| b.is_some()).count()
    }

    /// The reconstructed secret, once every position was seen at least once.
    pub fn recovered_secret(&self) -> Option<Word> {
        let mut w = Word::zero(self.recovered.len());
        for (i, bit) in self.recovered.iter().enumerate() {
            w.set_bit(i, (*bit)?);
        }
        Some(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_cycles_fire_on_odd_indices_only() {
        let input = Word::zero(8);
        let t = Trigger::OddCycles;
        let fired: Vec<bool> = (0..6).map(|c| t.fires(c, &input)).collect();
        assert_eq!(fired, vec![false, true, false, true, false, true]);
    }

    #[test]
    fn internal_counter_skips_cycle_zero() {
        let input = Word::zero(8);
        let t = Trigger::InternalCounter(3);
        let fired: Vec<u64> = (0..10).filter(|&c| t.fires(c, &input)).collect();
        assert_eq!(fired, vec![3, 6, 9]);
    }

    #[test]
    fn external_pattern_matches_input_word() {
        let pattern = Word::from_u64(0xA5, 8);
        let t = Trigger::ExternalPattern(pattern);
        assert!(t.fires(0, &Word::from_u64(0xA5, 8)));
        assert!(!t.fires(0, &Word::from_u64(0xA4, 8)));
        assert!(!t.input_independent());
    }

    #[test]
    fn leak_lane_width_rule() {
        assert_eq!(leak_lane_bits(1), 1);
        assert_eq!(leak_lane_bits(8), 1);
        assert_eq!(leak_lane_bits(9), 2);
        assert_eq!(leak_lane_bits(16), 2);
        assert_eq!(leak_lane_bits(64), 8);
    }

    #[test]
    fn disrupt_flip_xors_mask() {
        let spec = TrojanSpec {
            trigger: Trigger::Always,
            payload: Payload::DisruptFlip {
                mask: Word::from_u64(0x01, 8),
            },
        };
        let mut state = TrojanState::new(&spec).unwrap();
        let out = state.apply(&spec, &Word::from_u64(0x00, 8));
        assert_eq!(out.to_u64(), 0x01);
    }

    #[test]
    fn attacker_recovers_secret_from_raw_wire() {
        let secret = Word::from_u64(0xC3A5_1EF7_0123_8899, 64);
        let spec = TrojanSpec {
            trigger: Trigger::OddCycles,
            payload: Payload::LeakXorPrng {
                secret,
                lfsr_seed: 0xACE1,
            },
        };
        let mut state = TrojanState::new(&spec).unwrap();
        let mut oracle = AttackerOracle::new(&spec, 8).unwrap();

        let golden = Word::from_u64(0x5A, 8);
        for cycle in 0..200u64 {
            let out = if spec.trigger.fires(cycle, &golden) {
                state.apply(&spec, &golden)
            } else {
                golden
            };
            oracle.observe(cycle, &golden, Some(&out), true);
        }
        assert_eq!(oracle.recovered_secret(), Some(secret));
        assert_eq!(oracle.bits_recovered(), 64);
    }

    #[test]
    fn attacker_fills_missed_turns_on_later_wraps() {
        // the infected IP's word reaches the stream only on some turns; the
        // cursor wraps, so missed positions are recovered on a later pass
        let secret = Word::from_u64(0x9D, 8);
        let spec = TrojanSpec {
            trigger: Trigger::Always,
            payload: Payload::LeakXorPrng {
                secret,
                lfsr_seed: 0x1234,
            },
        };
        let mut state = TrojanState::new(&spec).unwrap();
        let mut oracle = AttackerOracle::new(&spec, 8).unwrap();
        let golden = Word::from_u64(0x00, 8);
        for cycle in 0..64u64 {
            let out = state.apply(&spec, &golden);
            // pretend the mux picks the infected IP on every third cycle
            let selected = cycle % 3 == 0;
            let observed = if selected { Some(&out) } else { None };
            oracle.observe(cycle, &golden, observed, selected);
        }
        assert_eq!(oracle.recovered_secret(), Some(secret));
    }

    #[test]
    fn oracle_needs_enough_fired_cycles() {
        let secret = Word::from_u64(0xFFFF, 16);
        let spec = TrojanSpec {
            trigger: Trigger::Always,
            payload: Payload::LeakXorPrng {
                secret,
                lfsr_seed: 1,
            },
        };
        let mut oracle = AttackerOracle::new(&spec, 8).unwrap();
        let wire = Word::zero(8);
        for cycle in 0..15 {
            oracle.observe(cycle, &wire, Some(&wire), true);
        }
        assert_eq!(oracle.recovered_secret(), None);
        assert_eq!(oracle.bits_recovered(), 15);
    }
}
