//! Machinery shared by the CRC-voting and majority-voting detectors:
//! per-IP error counters with warn/replace thresholds, the periodic
//! rotation scheduler, and the structured event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::Error;
use crate::fabric::{Fabric, SlotStatus};
use crate::variant::IpId;

/// Default replace threshold. The source material never fixes a value;
/// this is an arbitrary documented default, CLI-overridable.
pub const DEFAULT_THRESHOLD: u64 = 5;
/// Default warning threshold (first-discrepancy heads-up before removal).
pub const DEFAULT_WARN_THRESHOLD: u64 = 2;

/// Escalation requested by a counter crossing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CounterAction {
    Warn,
    Replace,
}

/// One IP's error event: the count it reached and the action, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorRecord {
    pub ip: IpId,
    pub count: u64,
    pub action: Option<CounterAction>,
}

/// Per-IP error counts. A counter only moves on an error event for that IP
/// and is dropped when the IP is replaced. "Exceeds the threshold" is
/// strictly greater-than, so replacement fires on event threshold + 1.
#[derive(Clone, Debug)]
pub struct ErrorCounters {
    counts: BTreeMap<IpId, u64>,
    warn_threshold: u64,
    threshold: u64,
    replaced: BTreeSet<IpId>,
}

impl ErrorCounters {
    pub fn new(warn_threshold: u64, threshold: u64) -> Result<Self, Error> {
        if warn_threshold == 0 || warn_threshold >= threshold {
            return Err(Error::Config(
                "require 1 <= warn_threshold < threshold".into(),
            ));
        }
        Ok(ErrorCounters {
            counts: BTreeMap::new(),
            warn_threshold,
            threshold,
            replaced: BTreeSet::new(),
        })
    }

    pub fn count(&self, ip: &str) -> u64 {
        self.counts.get(ip).copied().unwrap_or(0)
    }

    /// Records one error event per listed IP. An IP already marked for
    /// replacement is ignored; a Replace is emitted exactly once per IP.
    pub fn record_errors(&mut self, ips: &[&str]) -> Vec<ErrorRecord> {
        let mut records = Vec::with_capacity(ips.len());
        for &ip in ips {
            if self.replaced.contains(ip) {
                continue;
            }
            let count = self.counts.entry(ip.to_string()).or_insert(0);
            *count += 1;
            let count = *count;
            let action = if count == self.warn_threshold {
                Some(CounterAction::Warn)
            } else if count > self.threshold {
                self.replaced.insert(ip.to_string());
                self.counts.remove(ip);
                Some(CounterAction::Replace)
            } else {
                None
            };
            records.push(ErrorRecord {
                ip: ip.to_string(),
                count,
                action,
            });
        }
        records
    }

    /// Snapshot of the live counters (for reports and the authority feed).
    pub fn snapshot(&self) -> &BTreeMap<IpId, u64> {
        &self.counts
    }

    pub fn was_replaced(&self, ip: &str) -> bool {
        self.replaced.contains(ip)
    }
}

/// One line of the detector event log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub cycle: u64,
    pub kind: EventKind,
    pub ip: Option<IpId>,
    pub counter: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    CrcMinority,
    Dissent,
    Warn,
    Replace,
    Rotate,
    RotateSkipped,
    RotateDeferred,
    NoMajority,
    Degraded,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EventKind::CrcMinority => "CRC_MINORITY",
            EventKind::Dissent => "DISSENT",
            EventKind::Warn => "WARN",
            EventKind::Replace => "REPLACE",
            EventKind::Rotate => "ROTATE",
            EventKind::RotateSkipped => "ROTATE_SKIPPED",
            EventKind::RotateDeferred => "ROTATE_DEFERRED",
            EventKind::NoMajority => "NO_MAJORITY",
            EventKind::Degraded => "DEGRADED",
        };
        f.write_str(name)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cycle={} event={}", self.cycle, self.kind)?;
        if let Some(ip) = &self.ip {
            write!(f, " ip={ip}")?;
        }
        if let Some(counter) = self.counter {
            write!(f, " counter={counter}")?;
        }
        Ok(())
    }
}

/// Periodic IP replacement: at every positive multiple of the period, slot
/// i is swapped with the queue head and i advances modulo the slot count.
#[derive(Clone, Debug)]
pub struct Rotator {
    period: u64,
    next_slot: usize,
}

/// What a rotation attempt did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RotateOutcome {
    NotDue,
    Rotated {
        slot: usize,
        incoming: IpId,
    },
    /// Queue empty at the rotation instant; slot index unchanged.
    SkippedEmptyQueue {
        slot: usize,
    },
    /// Slot already mid-swap; deferred to the next period, index unchanged.
    DeferredBusy {
        slot: usize,
    },
}

impl Rotator {
    /// `period` 0 disables rotation.
    pub fn new(period: u64) -> Self {
        Rotator {
            period,
            next_slot: 0,
        }
    }

    pub fn maybe_rotate(&mut self, fabric: &mut Fabric, cycle: u64) -> RotateOutcome {
        if self.period == 0 || cycle == 0 || !cycle.is_multiple_of(self.period) {
            return RotateOutcome::NotDue;
        }
        let slot = self.next_slot;
        if fabric.queue().is_empty() {
            return RotateOutcome::SkippedEmptyQueue { slot };
        }
        if matches!(fabric.slot(slot), SlotStatus::Swapping { .. }) {
            return RotateOutcome::DeferredBusy { slot };
        }
        let incoming = fabric.queue().front().cloned().expect("checked non-empty");
        match fabric.begin_swap(slot, false) {
            Ok(()) => {
                self.next_slot = (self.next_slot + 1) % fabric.slot_count();
                RotateOutcome::Rotated { slot, incoming }
            }
            Err(_) => RotateOutcome::DeferredBusy { slot },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::PrCostModel;
    use crate::variant::{GoldenKind, IpVariant};
    use crate::word::Word;

    #[test]
    fn warn_fires_at_warn_threshold() {
        let mut counters = ErrorCounters::new(2, 5).unwrap();
        let first = counters.record_errors(&["x"]);
        assert_eq!(first[0].action, None);
        let second = counters.record_errors(&["x"]);
        assert_eq!(
            second,
            vec![ErrorRecord {
                ip: "x".into(),
                count: 2,
                action: Some(CounterAction::Warn),
            }]
        );
        assert_eq!(counters.count("x"), 2);
    }

    #[test]
    fn replace_fires_strictly_above_threshold() {
        let mut counters = ErrorCounters::new(2, 5).unwrap();
        for _ in 0..5 {
            let records = counters.record_errors(&["x"]);
            assert_ne!(records[0].action, Some(CounterAction::Replace));
        }
        // sixth event: counter 5 -> 6, exceeds 5
        let records = counters.record_errors(&["x"]);
        assert_eq!(
            records,
            vec![ErrorRecord {
                ip: "x".into(),
                count: 6,
                action: Some(CounterAction::Replace),
            }]
        );
        assert!(counters.was_replaced("x"));
        // no further records for a replaced IP
        assert!(counters.record_errors(&["x"]).is_empty());
    }

    #[test]
    fn thresholds_validated() {
        assert!(ErrorCounters::new(0, 5).is_err());
        assert!(ErrorCounters::new(5, 5).is_err());
        assert!(ErrorCounters::new(6, 5).is_err());
        assert!(ErrorCounters::new(1, 2).is_ok());
    }

    fn rotation_fabric() -> Fabric {
        let variants: Vec<IpVariant> = (0..5)
            .map(|i| IpVariant {
                ip_id: format!("ip{i}"),
                vendor_id: format!("v{i}"),
                golden: GoldenKind::Identity,
                trojan: None,
            })
            .collect();
        Fabric::new(8, 3, variants, PrCostModel::new(2, 25).unwrap()).unwrap()
    }

    #[test]
    fn rotation_walks_slots_in_order() {
        let mut fabric = rotation_fabric();
        let mut rotator = Rotator::new(200);
        let mut hits = Vec::new();
        for cycle in 0..=700u64 {
            match rotator.maybe_rotate(&mut fabric, cycle) {
                RotateOutcome::Rotated { slot, .. } => hits.push((cycle, slot)),
                RotateOutcome::NotDue => {}
                other => panic!("unexpected outcome {other:?}"),
            }
            fabric.step(&Word::from_u64(0, 8)).unwrap();
        }
        assert_eq!(hits, vec![(200, 0), (400, 1), (600, 2)]);
    }

    #[test]
    fn rotation_skipped_when_queue_empty() {
        let variants: Vec<IpVariant> = (0..3)
            .map(|i| IpVariant {
                ip_id: format!("ip{i}"),
                vendor_id: format!("v{i}"),
                golden: GoldenKind::Identity,
                trojan: None,
            })
            .collect();
        let mut fabric = Fabric::new(8, 3, variants, PrCostModel::new(2, 25).unwrap()).unwrap();
        let mut rotator = Rotator::new(10);
        assert_eq!(
            rotator.maybe_rotate(&mut fabric, 10),
            RotateOutcome::SkippedEmptyQueue { slot: 0 }
        );
        // index unchanged: the next due rotation still targets slot 0
        assert_eq!(
            rotator.maybe_rotate(&mut fabric, 20),
            RotateOutcome::SkippedEmptyQueue { slot: 0 }
        );
    }

    #[test]
    fn rotation_defers_on_busy_slot_without_advancing() {
        let mut fabric = rotation_fabric();
        let mut rotator = Rotator::new(1);
        // occupy slot 0 with a long swap
        fabric.begin_swap(0, false).unwrap();
        assert_eq!(
            rotator.maybe_rotate(&mut fabric, 1),
            RotateOutcome::DeferredBusy { slot: 0 }
        );
        fabric.step(&Word::from_u64(0, 8)).unwrap();
        fabric.step(&Word::from_u64(0, 8)).unwrap();
        // swap done; the deferred rotation now lands on slot 0
        match rotator.maybe_rotate(&mut fabric, 3) {
            RotateOutcome::Rotated { slot: 0, .. } => {}
            other => panic!("expected rotation of slot 0, got {other:?}"),
        }
    }

    #[test]
    fn zero_period_never_rotates() {
        let mut fabric = rotation_fabric();
        let mut rotator = Rotator::new(0);
        for cycle in 0..100 {
            assert_eq!(
                rotator.maybe_rotate(&mut fabric, cycle),
                RotateOutcome::NotDue
            );
        }
    }

    #[test]
    fn event_log_line_format() {
        let event = Event {
            cycle: 12,
            kind: EventKind::CrcMinority,
            ip: Some("ip2".into()),
            counter: Some(3),
        };
        assert_eq!(
            event.to_string(),
            "cycle=12 event=CRC_MINORITY ip=ip2 counter=3"
        );
        let rotate = Event {
            cycle: 200,
            kind: EventKind::Rotate,
            ip: Some("ip3".into()),
            counter: None,
        };
        assert_eq!(rotate.to_string(), "cycle=200 event=ROTATE ip=ip3");
    }
}
