//! The simulation substrate: reconfigurable slots holding IP variants, the
//! partial-reconfiguration cost model, and the waiting queue of IPs.
//!
//! Time is abstract cycles. Wall-clock PR timings enter only through the
//! swap/full-program ratio default in [`PrCostModel`]. A slot undergoing a
//! swap contributes no output and is excluded from selection and voting
//! until the swap completes.

use std::collections::{BTreeMap, VecDeque};

use crate::error::Error;
use crate::variant::{IpId, IpVariant, VariantRuntime};
use crate::word::Word;

/// Swap-to-full-program ratio observed for partial reconfiguration
/// (450 ms average swap vs 5-6 s full programming).
pub const PR_RATIO: f64 = 0.08;

/// Cycle costs of partial reconfiguration vs full-device programming.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrCostModel {
    pub swap_cycles: u64,
    pub full_program_cycles: u64,
}

impl PrCostModel {
    pub fn new(swap_cycles: u64, full_program_cycles: u64) -> Result<Self, Error> {
        if swap_cycles == 0 || full_program_cycles < swap_cycles {
            return Err(Error::Config(
                "cost model requires 1 <= swap_cycles <= full_program_cycles".into(),
            ));
        }
        Ok(PrCostModel {
            swap_cycles,
            full_program_cycles,
        })
    }

    /// Swap cost derived from a full-programming cost at the measured ratio.
    pub fn from_full(full_program_cycles: u64) -> Self {
        let swap = (PR_RATIO * full_program_cycles as f64).round() as u64;
        PrCostModel {
            swap_cycles: swap.max(1),
            full_program_cycles,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.swap_cycles as f64 / self.full_program_cycles as f64
    }
}

impl Default for PrCostModel {
    /// The measured averages, one cycle per millisecond: 450 ms swap,
    /// 5.5 s full programming.
    fn default() -> Self {
        PrCostModel {
            swap_cycles: 450,
            full_program_cycles: 5500,
        }
    }
}

/// What a fabric slot currently holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotStatus {
    Empty,
    Programmed(IpId),
    Swapping { incoming: IpId, remaining: u64 },
}

/// The reconfigurable fabric: slots, queue, and every variant's runtime.
#[derive(Clone, Debug)]
pub struct Fabric {
    width: usize,
    slots: Vec<SlotStatus>,
    queue: VecDeque<IpId>,
    discarded: Vec<IpId>,
    variants: BTreeMap<IpId, VariantRuntime>,
    cost: PrCostModel,
    cycle: u64,
}

impl Fabric {
    /// Programs the first `slot_count` variants (in definition order) into
    /// slots; the rest wait in the queue.
    pub fn new(
        width: usize,
        slot_count: usize,
        variants: Vec<IpVariant>,
        cost: PrCostModel,
    ) -> Result<Self, Error> {
        Word::try_zero(width)?;
        if slot_count == 0 {
            return Err(Error::Config("slot count must be at least 1".into()));
        }
        let mut runtimes = BTreeMap::new();
        let mut slots = Vec::with_capacity(slot_count);
        let mut queue = VecDeque::new();
        for (i, def) in variants.into_iter().enumerate() {
            let id = def.ip_id.clone();
            if runtimes
                .insert(id.clone(), VariantRuntime::new(def)?)
                .is_some()
            {
                return Err(Error::Config(format!("duplicate ip_id `{id}`")));
            }
            if i < slot_count {
                slots.push(SlotStatus::Programmed(id));
            } else {
                queue.push_back(id);
            }
        }
        while slots.len() < slot_count {
            slots.push(SlotStatus::Empty);
        }
        Ok(Fabric {
            width,
            slots,
            queue,
            discarded: Vec::new(),
            variants: runtimes,
            cost,
            cycle: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn cost_model(&self) -> &PrCostModel {
        &self.cost
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, slot_id: usize) -> &SlotStatus {
        &self.slots[slot_id]
    }

    /// The IP programmed in a slot, if any.
    pub fn programmed_ip(&self, slot_id: usize) -> Option<&IpId> {
        match &self.slots[slot_id] {
            SlotStatus::Programmed(ip) => Some(ip),
            _ => None,
        }
    }

    /// Slot currently holding the given IP.
    pub fn slot_of(&self, ip: &str) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| matches!(s, SlotStatus::Programmed(id) if id == ip))
    }

    pub fn queue(&self) -> &VecDeque<IpId> {
        &self.queue
    }

    pub fn discarded(&self) -> &[IpId] {
        &self.discarded
    }

    pub fn variant(&self, ip: &str) -> Option<&VariantRuntime> {
        self.variants.get(ip)
    }

    /// Runs one cycle: every programmed slot evaluates its variant, every
    /// swapping slot counts down (completing at zero). The cycle counter
    /// advances by one.
    pub fn step(&mut self, input: &Word) -> Result<BTreeMap<usize, Word>, Error> {
        if input.width() != self.width {
            return Err(Error::WidthMismatch {
                input: input.width(),
                expected: self.width,
            });
        }
        let cycle = self.cycle;
        let mut outputs = BTreeMap::new();
        for (slot_id, slot) in self.slots.iter_mut().enumerate() {
            match slot {
                SlotStatus::Empty => {}
                SlotStatus::Programmed(ip) => {
                    let rt = self.variants.get_mut(ip).expect("slot holds known ip");
                    outputs.insert(slot_id, rt.evaluate(input, cycle));
                }
                SlotStatus::Swapping {
                    incoming,
                    remaining,
                } => {
                    *remaining -= 1;
                    if *remaining == 0 {
                        let ip = incoming.clone();
                        // fresh bitstream: the incoming variant starts clean
                        self.variants
                            .get_mut(&ip)
                            .expect("queue holds known ip")
                            .reset();
                        *slot = SlotStatus::Programmed(ip);
                    }
                }
            }
        }
        self.cycle += 1;
        Ok(outputs)
    }

    /// Starts a partial-reconfiguration swap: queue head replaces the slot's
    /// IP. The outgoing IP is re-enqueued at the tail (`discard` false,
    /// periodic rotation) or dropped for good (`discard` true, infection
    /// removal).
    pub fn begin_swap(&mut self, slot_id: usize, discard: bool) -> Result<(), Error> {
        if slot_id >= self.slots.len() {
            return Err(Error::SlotOutOfRange(slot_id));
        }
        match &self.slots[slot_id] {
            SlotStatus::Swapping { .. } => return Err(Error::SwapInProgress(slot_id)),
            SlotStatus::Empty => return Err(Error::SlotNotProgrammed(slot_id)),
            SlotStatus::Programmed(_) => {}
        }
        let incoming = self.queue.pop_front().ok_or(Error::QueueEmpty)?;
        let SlotStatus::Programmed(outgoing) = std::mem::replace(
            &mut self.slots[slot_id],
            SlotStatus::Swapping {
                incoming,
                remaining: self.cost.swap_cycles,
            },
        ) else {
            unreachable!("status checked above");
        };
        if discard {
            self.discarded.push(outgoing);
        } else {
            self.queue.push_back(outgoing);
        }
        Ok(())
    }

    /// Removes a programmed IP without a successor (replacement requested
    /// with an empty queue). The slot goes dark immediately.
    pub fn remove_ip(&mut self, slot_id: usize) -> Result<IpId, Error> {
        if slot_id >= self.slots.len() {
            return Err(Error::SlotOutOfRange(slot_id));
        }
        match &self.slots[slot_id] {
            SlotStatus::Swapping { .. } => Err(Error::SwapInProgress(slot_id)),
            SlotStatus::Empty => Err(Error::SlotNotProgrammed(slot_id)),
            SlotStatus::Programmed(_) => {
                let SlotStatus::Programmed(outgoing) =
                    std::mem::replace(&mut self.slots[slot_id], SlotStatus::Empty)
                else {
                    unreachable!()
                };
                self.discarded.push(outgoing.clone());
                Ok(outgoing)
            }
        }
    }

    /// Every variant is in exactly one place: a slot, an in-flight swap,
    /// the queue, or the discard list.
    pub fn check_conservation(&self) -> bool {
        let in_slots = self
            .slots
            .iter()
            .filter(|s| !matches!(s, SlotStatus::Empty))
            .count();
        in_slots + self.queue.len() + self.discarded.len() == self.variants.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variant::GoldenKind;

    fn identity_variants(n: usize) -> Vec<IpVariant> {
        (0..n)
            .map(|i| IpVariant {
                ip_id: format!("ip{i}"),
                vendor_id: format!("vendor{i}"),
                golden: GoldenKind::Identity,
                trojan: None,
            })
            .collect()
    }

    fn small_fabric(slots: usize, total: usize, swap_cycles: u64) -> Fabric {
        Fabric::new(
            8,
            slots,
            identity_variants(total),
            PrCostModel::new(swap_cycles, swap_cycles * 12).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn three_programmed_slots_three_outputs() {
        let mut fabric = small_fabric(3, 3, 2);
        let outputs = fabric.step(&Word::from_u64(0x0F, 8)).unwrap();
        assert_eq!(outputs.len(), 3);
        assert_eq!(fabric.cycle(), 1);
        for word in outputs.values() {
            assert_eq!(word.to_u64(), 0x0F);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut fabric = small_fabric(3, 3, 2);
        let err = fabric.step(&Word::from_u64(0, 16)).unwrap_err();
        assert!(matches!(
            err,
            Error::WidthMismatch {
                input: 16,
                expected: 8
            }
        ));
    }

    #[test]
    fn swapping_slot_yields_no_output_and_counts_down() {
        let mut fabric = small_fabric(3, 4, 2);
        fabric.begin_swap(1, false).unwrap();
        let outputs = fabric.step(&Word::from_u64(0, 8)).unwrap();
        assert!(!outputs.contains_key(&1));
        assert_eq!(outputs.len(), 2);
        assert_eq!(
            *fabric.slot(1),
            SlotStatus::Swapping {
                incoming: "ip3".into(),
                remaining: 1
            }
        );
    }

    #[test]
    fn swap_completes_when_countdown_hits_zero() {
        let mut fabric = small_fabric(3, 4, 2);
        fabric.begin_swap(0, false).unwrap();
        fabric.step(&Word::from_u64(0, 8)).unwrap();
        fabric.step(&Word::from_u64(0, 8)).unwrap();
        assert_eq!(*fabric.slot(0), SlotStatus::Programmed("ip3".into()));
        // the slot produced no output for exactly swap_cycles cycles
        let outputs = fabric.step(&Word::from_u64(0, 8)).unwrap();
        assert!(outputs.contains_key(&0));
    }

    #[test]
    fn discarded_ip_never_returns() {
        let mut fabric = small_fabric(3, 4, 2);
        fabric.begin_swap(2, true).unwrap();
        for _ in 0..5 {
            fabric.step(&Word::from_u64(0, 8)).unwrap();
        }
        assert_eq!(fabric.discarded(), &["ip2".to_string()]);
        assert!(!fabric.queue().contains(&"ip2".to_string()));
        assert!(fabric.slot_of("ip2").is_none());
        assert!(fabric.check_conservation());
    }

    #[test]
    fn rotation_appends_outgoing_to_queue_tail() {
        let mut fabric = small_fabric(3, 5, 2);
        // queue is [ip3, ip4]
        fabric.begin_swap(0, false).unwrap();
        assert_eq!(
            fabric.queue().iter().cloned().collect::<Vec<_>>(),
            vec!["ip4".to_string(), "ip0".to_string()]
        );
    }

    #[test]
    fn swap_on_swapping_slot_rejected() {
        let mut fabric = small_fabric(3, 5, 3);
        fabric.begin_swap(0, false).unwrap();
        let err = fabric.begin_swap(0, false).unwrap_err();
        assert!(matches!(err, Error::SwapInProgress(0)));
    }

    #[test]
    fn swap_with_empty_queue_rejected() {
        let mut fabric = small_fabric(3, 3, 2);
        assert!(matches!(fabric.begin_swap(0, true), Err(Error::QueueEmpty)));
        // fallback path: remove without successor
        let removed = fabric.remove_ip(0).unwrap();
        assert_eq!(removed, "ip0");
        assert_eq!(*fabric.slot(0), SlotStatus::Empty);
        assert!(fabric.check_conservation());
        let outputs = fabric.step(&Word::from_u64(0, 8)).unwrap();
        assert_eq!(outputs.len(), 2);
    }

    #[test]
    fn default_cost_model_matches_measured_ratio() {
        let default = PrCostModel::default();
        assert!((default.ratio() - PR_RATIO).abs() < 0.005);
        assert_eq!(PrCostModel::from_full(1000).swap_cycles, 80);
    }

    #[test]
    fn swap_unavailability_lasts_exactly_swap_cycles() {
        for swap_cycles in [1u64, 2, 5, 80] {
            let mut fabric = small_fabric(2, 3, swap_cycles);
            fabric.begin_swap(0, false).unwrap();
            let mut dark = 0;
            loop {
                let outputs = fabric.step(&Word::from_u64(0, 8)).unwrap();
                if outputs.contains_key(&0) {
                    break;
                }
                dark += 1;
            }
            assert_eq!(dark, swap_cycles, "swap_cycles {swap_cycles}");
        }
    }

    #[test]
    fn conservation_holds_across_random_swap_sequences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut fabric = small_fabric(3, 6, 2);
        for _ in 0..500 {
            if rng.gen_bool(0.2) {
                let slot = rng.gen_range(0..3);
                let discard = rng.gen_bool(0.3);
                let _ = fabric.begin_swap(slot, discard);
            }
            fabric
                .step(&Word::from_u64(rng.gen_range(0..256), 8))
                .unwrap();
            assert!(fabric.check_conservation());
        }
    }

    #[test]
    fn deterministic_given_same_inputs() {
        let run = || {
            let mut fabric = small_fabric(3, 4, 2);
            let mut trace = Vec::new();
            for c in 0..50u64 {
                if c == 10 {
                    fabric.begin_swap(1, false).unwrap();
                }
                let outputs = fabric.step(&Word::from_u64(c % 256, 8)).unwrap();
                trace.push(outputs);
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
