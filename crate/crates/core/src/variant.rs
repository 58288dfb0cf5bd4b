//! Vendor-attributed IP variants: a golden functional model plus an
//! optional embedded Trojan.

use crate::error::Error;
use crate::trojan::{TrojanSpec, TrojanState};
use crate::word::Word;

/// Identifier of an IP variant within a scenario (also the core id in the
/// authority database).
pub type IpId = String;

/// Built-in golden functional models. These stand in for the kinds of cores
/// the schemes were measured on (ALU, serial transmitter) without pinning
/// any vendor's internals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoldenKind {
    /// Output equals input, any width.
    Identity,
    /// 8-bit ALU: op = bits 6..7 (0 add, 1 and, 2 xor, 3 not),
    /// a = bits 0..2, b = bits 3..5.
    Alu8,
    /// 1-bit serial transmitter: latches the last 8 input bits every 10
    /// cycles and shifts out a start bit (0), the byte LSB-first, and a
    /// stop bit (1).
    Serial1,
}

impl GoldenKind {
    /// Width constraint, if the model only works at one width.
    pub fn required_width(self) -> Option<usize> {
        match self {
            GoldenKind::Identity => None,
            GoldenKind::Alu8 => Some(8),
            GoldenKind::Serial1 => Some(1),
        }
    }
}

/// Mutable state of a golden model. Deterministic given the input sequence.
#[derive(Clone, Debug, Default)]
pub struct GoldenState {
    shift_in: u8,
    frame: u16,
    frame_pos: u8,
}

impl GoldenState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn eval(&mut self, kind: GoldenKind, input: &Word) -> Word {
        match kind {
            GoldenKind::Identity => *input,
            GoldenKind::Alu8 => {
                let v = input.to_u64() as u8;
                let a = v & 0x07;
                let b = (v >> 3) & 0x07;
                let result = match v >> 6 {
                    0 => a.wrapping_add(b),
                    1 => a & b,
                    2 => a ^ b,
                    _ => !a,
                };
                Word::from_u64(result as u64, 8)
            }
            GoldenKind::Serial1 => {
                self.shift_in = (self.shift_in >> 1) | ((input.to_u64() as u8 & 1) << 7);
                if self.frame_pos == 0 {
                    // start bit 0, data LSB-first, stop bit 1
                    self.frame = ((self.shift_in as u16) << 1) | 0x200;
                }
                let out = (self.frame >> self.frame_pos) & 1;
                self.frame_pos = (self.frame_pos + 1) % 10;
                Word::from_u64(out as u64, 1)
            }
        }
    }
}

/// A vendor-attributed functional model, possibly Trojan-infected.
#[derive(Clone, Debug)]
pub struct IpVariant {
    pub ip_id: IpId,
    pub vendor_id: String,
    pub golden: GoldenKind,
    pub trojan: Option<TrojanSpec>,
}

/// A variant plus its per-run mutable state. Programming an IP into a slot
/// resets this state, like downloading a fresh bitstream.
#[derive(Clone, Debug)]
pub struct VariantRuntime {
    pub def: IpVariant,
    golden_state: GoldenState,
    trojan_state: Option<TrojanState>,
}

impl VariantRuntime {
    pub fn new(def: IpVariant) -> Result<Self, Error> {
        let trojan_state = def.trojan.as_ref().map(TrojanState::new).transpose()?;
        Ok(VariantRuntime {
            def,
            golden_state: GoldenState::new(),
            trojan_state,
        })
    }

    /// Fresh-bitstream reset.
    pub fn reset(&mut self) {
        self.golden_state = GoldenState::new();
        if let Some(spec) = &self.def.trojan {
            self.trojan_state = Some(TrojanState::new(spec).expect("spec already validated"));
        }
    }

    /// One cycle of the variant: golden model first, then the Trojan payload
    /// if its trigger fires.
    pub fn evaluate(&mut self, input: &Word, cycle: u64) -> Word {
        let golden = self.golden_state.eval(self.def.golden, input);
        match (&self.def.trojan, &mut self.trojan_state) {
            (Some(spec), Some(state)) if spec.trigger.fires(cycle, input) => {
                state.apply(spec, &golden)
            }
            _ => golden,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trojan::{Payload, Trigger};

    fn clean(golden: GoldenKind) -> VariantRuntime {
        VariantRuntime::new(IpVariant {
            ip_id: "ip0".into(),
            vendor_id: "v0".into(),
            golden,
            trojan: None,
        })
        .unwrap()
    }

    #[test]
    fn clean_identity_passes_input_through() {
        let mut v = clean(GoldenKind::Identity);
        let out = v.evaluate(&Word::from_u64(0xA5, 8), 0);
        assert_eq!(out.to_u64(), 0xA5);
    }

    #[test]
    fn alu8_op_decode() {
        let mut v = clean(GoldenKind::Alu8);
        // op 0 (add): a=7, b=1 -> 8
        let add = v.evaluate(&Word::from_u64(0b00_001_111, 8), 0);
        assert_eq!(add.to_u64(), 8);
        // op 2 (xor): a=5, b=3 -> 6
        let xor = v.evaluate(&Word::from_u64(0b10_011_101, 8), 1);
        assert_eq!(xor.to_u64(), 6);
        // op 3 (not): a=0 -> 0xFF
        let not = v.evaluate(&Word::from_u64(0b11_000_000, 8), 2);
        assert_eq!(not.to_u64(), 0xFF);
    }

    #[test]
    fn serial1_frames_start_data_stop() {
        let mut v = clean(GoldenKind::Serial1);
        // feed constant 1 bits; first frame latches shift_in = 0x80
        let one = Word::from_u64(1, 1);
        let frame: Vec<u64> = (0..10).map(|c| v.evaluate(&one, c).to_u64()).collect();
        // start bit, byte 0x80 LSB-first, stop bit
        assert_eq!(frame, vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn serial1_is_deterministic_for_same_inputs() {
        let mut a = clean(GoldenKind::Serial1);
        let mut b = clean(GoldenKind::Serial1);
        for c in 0..100u64 {
            let bit = Word::from_u64(c % 3 % 2, 1);
            assert_eq!(a.evaluate(&bit, c), b.evaluate(&bit, c));
        }
    }

    #[test]
    fn disrupt_single_bit_flip() {
        let mut v = VariantRuntime::new(IpVariant {
            ip_id: "ip0".into(),
            vendor_id: "v0".into(),
            golden: GoldenKind::Identity,
            trojan: Some(TrojanSpec {
                trigger: Trigger::Always,
                payload: Payload::DisruptFlip {
                    mask: Word::from_u64(0x01, 8),
                },
            }),
        })
        .unwrap();
        let out = v.evaluate(&Word::from_u64(0x00, 8), 0);
        assert_eq!(out.to_u64(), 0x01);
    }

    #[test]
    fn odd_cycle_disrupt_alternates_clean_and_flipped() {
        let mut v = VariantRuntime::new(IpVariant {
            ip_id: "ip0".into(),
            vendor_id: "v0".into(),
            golden: GoldenKind::Identity,
            trojan: Some(TrojanSpec {
                trigger: Trigger::OddCycles,
                payload: Payload::DisruptFlip {
                    mask: Word::from_u64(0xFF, 8),
                },
            }),
        })
        .unwrap();
        let input = Word::from_u64(0x0F, 8);
        let outs: Vec<u64> = (0..4).map(|c| v.evaluate(&input, c).to_u64()).collect();
        assert_eq!(outs, vec![0x0F, 0xF0, 0x0F, 0xF0]);
    }

    #[test]
    fn trigger_purity_output_differs_iff_fired() {
        let mask = Word::from_u64(0x10, 8);
        let spec = TrojanSpec {
            trigger: Trigger::InternalCounter(7),
            payload: Payload::DisruptFlip { mask },
        };
        let mut infected = VariantRuntime::new(IpVariant {
            ip_id: "bad".into(),
            vendor_id: "v0".into(),
            golden: GoldenKind::Alu8,
            trojan: Some(spec.clone()),
        })
        .unwrap();
        let mut golden = clean(GoldenKind::Alu8);
        for cycle in 0..100u64 {
            let input = Word::from_u64(cycle.wrapping_mul(37) & 0xFF, 8);
            let a = infected.evaluate(&input, cycle);
            let b = golden.evaluate(&input, cycle);
            assert_eq!(a != b, spec.trigger.fires(cycle, &input), "cycle {cycle}");
        }
    }

    #[test]
    fn reset_restores_initial_state() {
        let mut v = clean(GoldenKind::Serial1);
        let one = Word::from_u64(1, 1);
        let first: Vec<u64> = (0..20).map(|c| v.evaluate(&one, c).to_u64()).collect();
        v.reset();
        let second: Vec<u64> = (0..20).map(|c| v.evaluate(&one, c).to_u64()).collect();
        assert_eq!(first, second);
    }
}
