//! Word-level majority voting among variant outputs, with the same
//! counter/threshold semantics as the CRC detector.
//!
//! Voting compares whole words: a strict majority word is emitted and
//! dissenters are counted. Bitwise majority is deliberately avoided; it
//! could fabricate a word no variant produced. During a swap window with
//! two live variants, voting degrades to an agreement check.

use crate::detector::{ErrorCounters, ErrorRecord};
use crate::variant::IpId;
use crate::word::Word;

/// Verdict of one word-level vote.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MajorityVerdict {
    Majority {
        output: Word,
        dissenters: Vec<IpId>,
        unanimous: bool,
    },
    /// Exact tie or three-way (or worse) split: no output this cycle.
    NoMajority,
    /// One live variant: its word passes through unvoted.
    PassThrough(Word),
    /// No live variants at all.
    NoOutput,
}

impl MajorityVerdict {
    /// The word emitted to the system output, if any.
    pub fn emitted(&self) -> Option<&Word> {
        match self {
            MajorityVerdict::Majority { output, .. } => Some(output),
            MajorityVerdict::PassThrough(word) => Some(word),
            MajorityVerdict::NoMajority | MajorityVerdict::NoOutput => None,
        }
    }
}

/// Strict-majority vote over live words. With two live variants this is an
/// agreement check (agreement emits, disagreement withholds), which the
/// strict-majority rule already encodes.
pub fn majority_vote(live: &[(&str, Word)]) -> MajorityVerdict {
    match live.len() {
        0 => return MajorityVerdict::NoOutput,
        1 => return MajorityVerdict::PassThrough(live[0].1),
        _ => {}
    }
    let n = live.len();
    for (_, candidate) in live {
        let count = live.iter().filter(|(_, w)| w == candidate).count();
        if count * 2 > n {
            let dissenters: Vec<IpId> = live
                .iter()
                .filter(|(_, w)| w != candidate)
                .map(|(ip, _)| ip.to_string())
                .collect();
            return MajorityVerdict::Majority {
                output: *candidate,
                unanimous: dissenters.is_empty(),
                dissenters,
            };
        }
    }
    MajorityVerdict::NoMajority
}

/// Majority-voting detector: vote, then feed dissenters to the counters.
#[derive(Clone, Debug)]
pub struct MvDetector {
    pub counters: ErrorCounters,
}

impl MvDetector {
    pub fn new(counters: ErrorCounters) -> Self {
        MvDetector { counters }
    }

    /// One cycle: returns the verdict and one record per dissent event.
    /// Dissent only counts when at least three variants voted.
    pub fn process_cycle(&mut self, live: &[(&str, Word)]) -> (MajorityVerdict, Vec<ErrorRecord>) {
        let verdict = majority_vote(live);
        let mut records = Vec::new();
        if live.len() >= 3 {
            if let MajorityVerdict::Majority { dissenters, .. } = &verdict {
                if !dissenters.is_empty() {
                    let refs: Vec<&str> = dissenters.iter().map(String::as_str).collect();
                    records = self.counters.record_errors(&refs);
                }
            }
        }
        (verdict, records)
    }
}
