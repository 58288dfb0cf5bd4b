//! Per-cycle output multiplexing among live variants: unbiased random
//! selection, or biased selection driven by learned 8-bit weights.
//!
//! Weights start at half the maximum (128), are incremented for IPs that
//! agree with the strict majority output and decremented for the odd ones
//! out, saturating at 0 and 255. Biased selection is weight-proportional
//! roulette, so a low-weight IP is still occasionally chosen until its
//! weight hits zero.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::variant::IpId;
use crate::word::Word;

pub const INITIAL_WEIGHT: u8 = 128;
pub const MAX_WEIGHT: u8 = 255;

/// A live slot's output offered to the selector this cycle.
#[derive(Clone, Debug)]
pub struct LiveOutput<'a> {
    pub slot: usize,
    pub ip: &'a str,
    pub word: Word,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    Unbiased,
    Biased,
}

/// Per-IP 8-bit weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightTable {
    weights: BTreeMap<IpId, u8>,
}

impl WeightTable {
    /// Every IP at the neutral initial weight.
    pub fn uniform<I: IntoIterator<Item = IpId>>(ids: I) -> Self {
        WeightTable {
            weights: ids.into_iter().map(|id| (id, INITIAL_WEIGHT)).collect(),
        }
    }

    /// Initial weights loaded from an authority export; IPs missing from
    /// the export fall back to the neutral weight.
    pub fn with_initial<I: IntoIterator<Item = IpId>>(
        ids: I,
        initial: &BTreeMap<IpId, u8>,
    ) -> Self {
        WeightTable {
            weights: ids
                .into_iter()
                .map(|id| {
                    let w = initial.get(&id).copied().unwrap_or(INITIAL_WEIGHT);
                    (id, w)
                })
                .collect(),
        }
    }

    pub fn weight(&self, ip: &str) -> u8 {
        self.weights.get(ip).copied().unwrap_or(INITIAL_WEIGHT)
    }

    /// Majority-comparison learning step. Needs at least three live outputs
    /// for a well-defined majority; with fewer, or with no strict majority,
    /// nothing changes.
    pub fn update(&mut self, live: &[LiveOutput<'_>]) {
        if live.len() < 3 {
            return;
        }
        let Some(major) = strict_majority_word(live) else {
            return;
        };
        for out in live {
            let w = self
                .weights
                .entry(out.ip.to_string())
                .or_insert(INITIAL_WEIGHT);
            if out.word == major {
                *w = w.saturating_add(1);
            } else {
                *w = w.saturating_sub(1);
            }
        }
    }
}

/// The word held by a strict majority of live outputs, if any.
pub fn strict_majority_word(live: &[LiveOutput<'_>]) -> Option<Word> {
    let n = live.len();
    for candidate in live {
        let count = live.iter().filter(|o| o.word == candidate.word).count();
        if count * 2 > n {
            return Some(candidate.word);
        }
    }
    None
}

/// Output selector for the multiplexing schemes.
#[derive(Clone, Debug)]
pub struct Selector {
    pub mode: SelectionMode,
    pub weights: WeightTable,
}

impl Selector {
    pub fn new(mode: SelectionMode, weights: WeightTable) -> Self {
        Selector { mode, weights }
    }

    /// Chooses one live output. Unbiased mode is uniform over live slots;
    /// biased mode draws proportionally to weights, falling back to uniform
    /// when every live weight is zero. Returns the index into `live`, or
    /// None when no slot produced output this cycle.
    pub fn select(&self, live: &[LiveOutput<'_>], rng: &mut impl Rng) -> Option<usize> {
        if live.is_empty() {
            return None;
        }
        match self.mode {
            SelectionMode::Unbiased => Some(rng.gen_range(0..live.len())),
            SelectionMode::Biased => {
                let weights: Vec<u32> = live
                    .iter()
                    .map(|o| u32::from(self.weights.weight(o.ip)))
                    .collect();
                match WeightedIndex::new(&weights) {
                    Ok(dist) => Some(dist.sample(rng)),
                    // all live weights zero
                    Err(_) => Some(rng.gen_range(0..live.len())),
                }
            }
        }
    }

    /// Runs the learning rule for this cycle's outputs (biased mode keeps
    /// learning; the table is also maintained in unbiased mode so reports
    /// can show the learned state).
    pub fn learn(&mut self, live: &[LiveOutput<'_>]) {
        self.weights.update(live);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn outputs3(words: [u64; 3]) -> Vec<LiveOutput<'static>> {
        vec![
            LiveOutput {
                slot: 0,
                ip: "a",
                word: Word::from_u64(words[0], 8),
            },
            LiveOutput {
                slot: 1,
                ip: "b",
                word: Word::from_u64(words[1], 8),
            },
            LiveOutput {
                slot: 2,
                ip: "c",
                word: Word::from_u64(words[2], 8),
            },
        ]
    }

    fn table(a: u8, b: u8, c: u8) -> WeightTable {
        let mut weights = BTreeMap::new();
        weights.insert("a".to_string(), a);
        weights.insert("b".to_string(), b);
        weights.insert("c".to_string(), c);
        WeightTable { weights }
    }

    #[test]
    fn zero_weight_ip_never_selected() {
        let selector = Selector::new(SelectionMode::Biased, table(0, 128, 128));
        let live = outputs3([1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let idx = selector.select(&live, &mut rng).unwrap();
            assert_ne!(live[idx].ip, "a");
        }
    }

    #[test]
    fn unbiased_selection_is_uniform() {
        let selector = Selector::new(SelectionMode::Unbiased, table(1, 1, 1));
        let live = outputs3([1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = [0u64; 3];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[selector.select(&live, &mut rng).unwrap()] += 1;
        }
        for count in counts {
            let freq = count as f64 / draws as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn all_zero_weights_fall_back_to_uniform() {
        let selector = Selector::new(SelectionMode::Biased, table(0, 0, 0));
        let live = outputs3([1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut counts = [0u64; 3];
        for _ in 0..30_000 {
            counts[selector.select(&live, &mut rng).unwrap()] += 1;
        }
        for count in counts {
            assert!(count > 8_000, "counts {counts:?}");
        }
    }

    #[test]
    fn no_live_slots_yields_none() {
        let selector = Selector::new(SelectionMode::Unbiased, table(1, 1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(selector.select(&[], &mut rng), None);
    }

    #[test]
    fn update_increments_majority_decrements_minority() {
        let mut t = table(128, 128, 128);
        t.update(&outputs3([7, 7, 9]));
        assert_eq!(t.weight("a"), 129);
        assert_eq!(t.weight("b"), 129);
        assert_eq!(t.weight("c"), 127);
    }

    #[test]
    fn update_saturates_at_both_ends() {
        let mut t = table(255, 255, 0);
        t.update(&outputs3([7, 7, 9]));
        assert_eq!(t.weight("a"), 255);
        assert_eq!(t.weight("b"), 255);
        assert_eq!(t.weight("c"), 0);
    }

    #[test]
    fn update_skips_three_way_split() {
        let mut t = table(128, 128, 128);
        t.update(&outputs3([1, 2, 3]));
        assert_eq!(t, table(128, 128, 128));
    }

    #[test]
    fn update_skips_fewer_than_three_outputs() {
        let mut t = table(128, 128, 128);
        t.update(&outputs3([7, 7, 9])[..2]);
        assert_eq!(t, table(128, 128, 128));
    }

    #[test]
    fn strict_majority_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for n in [3usize, 4, 5, 7] {
            for _ in 0..2_000 {
                let ids: Vec<String> = (0..n).map(|i| format!("ip{i}")).collect();
                let live: Vec<LiveOutput> = (0..n)
                    .map(|i| LiveOutput {
                        slot: i,
                        ip: &ids[i],
                        word: Word::from_u64(rng.gen_range(0..4), 8),
                    })
                    .collect();
                // oracle: most frequent word, accepted only if count > n/2
                let mut best: Option<(Word, usize)> = None;
                for o in &live {
                    let count = live.iter().filter(|x| x.word == o.word).count();
                    if best.is_none_or(|(_, c)| count > c) {
                        best = Some((o.word, count));
                    }
                }
                let oracle = best.and_then(|(w, c)| (c * 2 > n).then_some(w));
                assert_eq!(strict_majority_word(&live), oracle);
            }
        }
    }

    #[test]
    fn always_disagreeing_ip_hits_zero_within_128_updates() {
        let mut t = table(128, 128, 128);
        let mut steps = 0;
        while t.weight("c") > 0 {
            t.update(&outputs3([7, 7, 9]));
            steps += 1;
            assert!(steps <= 128, "weight should bottom out within 128 updates");
        }
        assert_eq!(steps, 128);
        // with the weight floored at zero, biased selection never picks it
        let selector = Selector::new(SelectionMode::Biased, t);
        let live = outputs3([7, 7, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5_000 {
            assert_ne!(live[selector.select(&live, &mut rng).unwrap()].ip, "c");
        }
    }

    #[test]
    fn biased_probabilities_track_weights() {
        let selector = Selector::new(SelectionMode::Biased, table(100, 50, 50));
        let live = outputs3([1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let draws = 200_000;
        let mut count_a = 0u64;
        for _ in 0..draws {
            if live[selector.select(&live, &mut rng).unwrap()].ip == "a" {
                count_a += 1;
            }
        }
        let freq = count_a as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }
}
