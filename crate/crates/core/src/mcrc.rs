//! CRC-voting Trojan detection: per-IP CRC streams, strict-majority voting
//! over the CRC values of each completed block, and error counters that
//! drive warning and replacement.
//!
//! Voting runs on CRCs rather than raw words; comparing full outputs is the
//! majority-voting detector's job. CRC accumulators are kept block-aligned
//! by resetting whenever the set of live IPs changes, so votes always
//! compare corresponding blocks.

use std::collections::BTreeMap;

use crate::crc5::{Crc5Stream, CrcValue};
use crate::detector::{ErrorCounters, ErrorRecord};
use crate::variant::IpId;
use crate::word::Word;

/// Verdict of one CRC vote.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CrcVerdict {
    Majority {
        major: CrcValue,
        minority: Vec<IpId>,
    },
    /// No value held a strict majority; counters do not move.
    NoMajority,
}

/// Strict-majority vote among per-IP CRCs. Call with at least three live
/// CRCs; the detector handles degraded mode before voting.
pub fn vote_crc(crcs: &[(&str, CrcValue)]) -> CrcVerdict {
    let n = crcs.len();
    debug_assert!(n >= 3);
    for (_, candidate) in crcs {
        let count = crcs.iter().filter(|(_, c)| c == candidate).count();
        if count * 2 > n {
            let minority = crcs
                .iter()
                .filter(|(_, c)| c != candidate)
                .map(|(ip, _)| ip.to_string())
                .collect();
            return CrcVerdict::Majority {
                major: *candidate,
                minority,
            };
        }
    }
    CrcVerdict::NoMajority
}

/// What one cycle of CRC processing produced.
#[derive(Clone, Debug, Default)]
pub struct McrcCycleOutcome {
    /// One verdict per block completed this cycle.
    pub verdicts: Vec<CrcVerdict>,
    /// One record per (block, minority IP) error event, in vote order.
    pub records: Vec<ErrorRecord>,
    /// Fewer than three live IPs: no voting, pass-through.
    pub degraded: bool,
}

/// The CRC voting circuit plus its error counters.
#[derive(Clone, Debug)]
pub struct McrcDetector {
    streams: BTreeMap<IpId, Crc5Stream>,
    live_set: Vec<IpId>,
    pub counters: ErrorCounters,
}

impl McrcDetector {
    pub fn new(counters: ErrorCounters) -> Self {
        McrcDetector {
            streams: BTreeMap::new(),
            live_set: Vec::new(),
            counters,
        }
    }

    /// Feeds one cycle of live outputs and votes on every completed block.
    pub fn process_cycle(&mut self, live: &[(&str, Word)]) -> McrcCycleOutcome {
        let mut outcome = McrcCycleOutcome::default();

        let ids: Vec<IpId> = live.iter().map(|(ip, _)| ip.to_string()).collect();
        if ids != self.live_set {
            // membership changed: drop partial blocks to stay aligned
            self.streams.clear();
            self.live_set = ids;
        }

        if live.len() < 3 {
            outcome.degraded = !live.is_empty();
            return outcome;
        }

        // all live streams share the word width, so each completes the same
        // number of blocks this cycle
        let mut per_ip_crcs: Vec<(&str, Vec<CrcValue>)> = Vec::with_capacity(live.len());
        for (ip, word) in live {
            let stream = self.streams.entry(ip.to_string()).or_default();
            per_ip_crcs.push((ip, stream.feed(word)));
        }
        let blocks = per_ip_crcs[0].1.len();

        for block in 0..blocks {
            let ballot: Vec<(&str, CrcValue)> = per_ip_crcs
                .iter()
                .map(|(ip, crcs)| (*ip, crcs[block]))
                .collect();
            let verdict = vote_crc(&ballot);
            if let CrcVerdict::Majority { minority, .. } = &verdict {
                if !minority.is_empty() {
                    let refs: Vec<&str> = minority.iter().map(String::as_str).collect();
                    outcome.records.extend(self.counters.record_errors(&refs));
                }
            }
            outcome.verdicts.push(verdict);
        }
        outcome
    }
}
