//! The scenario runner: wires the fabric, the attack library, and one
//! defense scheme into a deterministic cycle loop, and reports selection
//! statistics, detection events, and leakage figures.
//!
//! All randomness comes from per-concern substreams of the scenario seed
//! (input words, output selection, logger duty), so a scenario file plus a
//! seed reproduces a run byte for byte.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{CounterAction, ErrorCounters, Event, EventKind, RotateOutcome, Rotator};
use crate::error::Error;
use crate::fabric::Fabric;
use crate::logger::CrcLogger;
use crate::mcrc::{CrcVerdict, McrcDetector};
use crate::mrvo::{LiveOutput, SelectionMode, Selector, WeightTable};
use crate::mv::{MajorityVerdict, MvDetector};
use crate::sb::SbChannel;
use crate::scenario::{Scenario, Scheme};
use crate::trojan::{AttackerOracle, Payload};
use crate::variant::{GoldenState, IpId};
use crate::word::Word;

const STREAM_INPUT: u64 = 0;
const STREAM_SELECT: u64 = 1;
const STREAM_LOGGER: u64 = 2;

/// Event lines kept in a report before truncation (flagged when hit).
const EVENT_CAP: usize = 10_000;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Static protection scores against the surveyed attack classes,
/// documentation-sourced (not computed by the simulator).
pub fn scheme_score(scheme: Scheme) -> Option<f64> {
    match scheme {
        Scheme::Sb => Some(1.8),
        Scheme::Mrvo => Some(1.4),
        Scheme::Mcrc => Some(2.2),
        Scheme::Mv => Some(3.0),
        Scheme::LoggerOnly => None,
    }
}

/// Per-run statistics and the detection event log.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub width: usize,
    pub cycles: u64,
    pub slots: usize,
    pub selection: SelectionMode,
    /// Fraction of cycles the multiplexer picked an infected slot.
    pub infected_ip_rate: f64,
    /// Fraction of cycles the emitted word differed from the golden word.
    pub infected_output_rate: f64,
    pub emitted_mismatches: u64,
    pub emitted_cycles: u64,
    pub no_output_cycles: u64,
    pub degraded_cycles: u64,
    pub no_majority_cycles: u64,
    /// Cycle of the first Replace of an infected IP.
    pub first_detection_cycle: Option<u64>,
    /// Fraction of pre-detection cycles on which infected data reached the
    /// system output (selection schemes: infected slot selected).
    pub leak_window: Option<f64>,
    /// Set when no detection occurred, so the window spans the full run.
    pub leak_window_full_run: bool,
    /// Secret bits the attacker oracle captured off the observable stream.
    pub attacker_bits: Option<usize>,
    /// Whether the oracle's reconstruction equals the true secret.
    pub attacker_recovered: Option<bool>,
    pub rotations: u64,
    pub scheme_score: Option<f64>,
    pub flags: Vec<String>,
    pub events: Vec<Event>,
}

/// Everything a run produces beyond the printable report.
pub struct RunOutput {
    pub report: RunReport,
    pub logger: Option<CrcLogger>,
    pub input_trace: Vec<Word>,
    pub final_counters: BTreeMap<IpId, u64>,
    pub replaced_ips: Vec<IpId>,
}

impl RunReport {
    /// Fixed-field structured text; identical scenario + seed renders
    /// byte-identically.
    pub fn render(&self) -> String {
        fn opt_u64(v: Option<u64>) -> String {
            v.map_or_else(|| "none".into(), |x| x.to_string())
        }
        fn opt_rate(v: Option<f64>) -> String {
            v.map_or_else(|| "none".into(), |x| format!("{x:.4}"))
        }
        let mut s = String::new();
        s.push_str("report_version=1\n");
        s.push_str(&format!("scheme={}\n", self.scheme.name()));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("width={}\n", self.width));
        s.push_str(&format!("cycles={}\n", self.cycles));
        s.push_str(&format!("slots={}\n", self.slots));
        s.push_str(&format!(
            "selection={}\n",
            match self.selection {
                SelectionMode::Unbiased => "unbiased",
                SelectionMode::Biased => "biased",
            }
        ));
        s.push_str(&format!("infected_ip_rate={:.4}\n", self.infected_ip_rate));
        s.push_str(&format!(
            "infected_output_rate={:.4}\n",
            self.infected_output_rate
        ));
        s.push_str(&format!("emitted_mismatches={}\n", self.emitted_mismatches));
        s.push_str(&format!("emitted_cycles={}\n", self.emitted_cycles));
        s.push_str(&format!("no_output_cycles={}\n", self.no_output_cycles));
        s.push_str(&format!("degraded_cycles={}\n", self.degraded_cycles));
        s.push_str(&format!("no_majority_cycles={}\n", self.no_majority_cycles));
        s.push_str(&format!(
            "first_detection_cycle={}\n",
            opt_u64(self.first_detection_cycle)
        ));
        s.push_str(&format!("leak_window={}\n", opt_rate(self.leak_window)));
        s.push_str(&format!(
            "leak_window_full_run={}\n",
            self.leak_window_full_run
        ));
        s.push_str(&format!(
            "attacker_bits={}\n",
            self.attacker_bits
                .map_or_else(|| "none".into(), |b| b.to_string())
        ));
        s.push_str(&format!(
            "attacker_recovered={}\n",
            self.attacker_recovered
                .map_or_else(|| "none".into(), |b| b.to_string())
        ));
        s.push_str(&format!("rotations={}\n", self.rotations));
        s.push_str(&format!(
            "scheme_score={}\n",
            self.scheme_score
                .map_or_else(|| "none".into(), |x| format!("{x:.1}"))
        ));
        s.push_str(&format!(
            "flags={}\n",
            if self.flags.is_empty() {
                "none".to_string()
            } else {
                self.flags.join(",")
            }
        ));
        s.push_str("events:\n");
        for event in &self.events {
            s.push_str(&event.to_string());
            s.push('\n');
        }
        s
    }
}

/// Runs one scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, Error> {
    let width = scenario.width;
    let golden_kind = scenario.golden_kind();
    let mut fabric = Fabric::new(
        width,
        scenario.slots,
        scenario.variants.clone(),
        scenario.cost,
    )?;

    let ids: Vec<IpId> = scenario.variants.iter().map(|v| v.ip_id.clone()).collect();
    let index_of: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let infected: Vec<usize> = scenario
        .variants
        .iter()
        .enumerate()
        .filter(|(_, v)| v.trojan.is_some())
        .map(|(i, _)| i)
        .collect();
    let single_infected = (infected.len() == 1).then(|| infected[0]);

    let mut golden_state = GoldenState::new();
    let mut rng_input = substream(scenario.seed, STREAM_INPUT);
    let mut rng_select = substream(scenario.seed, STREAM_SELECT);
    let mut rng_logger = substream(scenario.seed, STREAM_LOGGER);

    let sb_channel = scenario
        .sb
        .as_ref()
        .map(|c| SbChannel::new(c.family_size, c.rotation_period));

    let weights = match &scenario.initial_weights {
        Some(map) => WeightTable::with_initial(ids.iter().cloned(), map),
        None => WeightTable::uniform(ids.iter().cloned()),
    };
    let mut selector = Selector::new(scenario.selection, weights);
    let mut mcrc_detector = match scenario.scheme {
        Scheme::Mcrc => Some(McrcDetector::new(ErrorCounters::new(
            scenario.warn_threshold,
            scenario.threshold,
        )?)),
        _ => None,
    };
    let mut mv_detector = match scenario.scheme {
        Scheme::Mv => Some(MvDetector::new(ErrorCounters::new(
            scenario.warn_threshold,
            scenario.threshold,
        )?)),
        _ => None,
    };
    let mut rotator = Rotator::new(scenario.rotation_period);

    let mut logger = match &scenario.logger {
        Some(attach) => Some((
            index_of[attach.attach_to.as_str()],
            CrcLogger::new(attach.config.clone())?,
        )),
        None => None,
    };
    let mut input_trace: Vec<Word> = Vec::new();

    // the attacker oracle taps the observable output stream when exactly
    // one leak Trojan is present
    let mut oracle: Option<(usize, Word, AttackerOracle)> = match single_infected {
        Some(idx) => {
            let spec = scenario.variants[idx].trojan.as_ref().unwrap();
            match &spec.payload {
                Payload::LeakXorPrng { secret, .. } => {
                    Some((idx, *secret, AttackerOracle::new(spec, width)?))
                }
                Payload::DisruptFlip { .. } => None,
            }
        }
        None => None,
    };

    let mut events: Vec<Event> = Vec::new();
    let mut events_truncated = false;
    fn push_event(events: &mut Vec<Event>, truncated: &mut bool, event: Event) {
        if events.len() < EVENT_CAP {
            events.push(event);
        } else {
            *truncated = true;
        }
    }

    let mut emitted_cycles = 0u64;
    let mut emitted_mismatches = 0u64;
    let mut no_output_cycles = 0u64;
    let mut degraded_cycles = 0u64;
    let mut no_majority_cycles = 0u64;
    let mut infected_selected = 0u64;
    let mut pre_detect_cycles = 0u64;
    let mut pre_detect_selected = 0u64;
    let mut rotations = 0u64;
    let mut first_detection: Option<u64> = None;
    let mut replaced_ips: Vec<IpId> = Vec::new();

    for cycle in 0..scenario.cycles {
        let input = Word::random(&mut rng_input, width);
        let golden_word = golden_state.eval(golden_kind, &input);
        let outputs = fabric.step(&input)?;

        // (slot, variant index, word), ordered by slot
        let mut live: Vec<(usize, usize, Word)> = Vec::with_capacity(outputs.len());
        for (slot, word) in &outputs {
            let ip = fabric
                .programmed_ip(*slot)
                .expect("output from programmed slot");
            live.push((*slot, index_of[ip.as_str()], *word));
        }

        // SB on every variant output line: the trusted receiver decodes
        // what the boundary encoded; the round trip must stay the identity
        // even across a rotation switch cycle
        if let Some(channel) = &sb_channel {
            for (_, _, word) in live.iter_mut() {
                let encoded = channel.encode(word, cycle);
                let decoded = channel.decode(&encoded, cycle);
                assert_eq!(decoded, *word, "SB round trip broke at cycle {cycle}");
                *word = decoded;
            }
        }

        let live_refs: Vec<LiveOutput> = live
            .iter()
            .map(|(slot, idx, word)| LiveOutput {
                slot: *slot,
                ip: ids[*idx].as_str(),
                word: *word,
            })
            .collect();

        let detected_before = first_detection.is_some();
        let mut emitted: Option<Word> = None;
        let mut chosen_idx: Option<usize> = None;
        let mut replace_requests: Vec<IpId> = Vec::new();

        match scenario.scheme {
            Scheme::Sb | Scheme::LoggerOnly => {
                emitted = live.first().map(|(_, _, word)| *word);
            }
            Scheme::Mrvo | Scheme::Mcrc => {
                if let Some(i) = selector.select(&live_refs, &mut rng_select) {
                    emitted = Some(live[i].2);
                    chosen_idx = Some(live[i].1);
                }
                selector.learn(&live_refs);

                if let Some(detector) = &mut mcrc_detector {
                    let ballot: Vec<(&str, Word)> =
                        live_refs.iter().map(|o| (o.ip, o.word)).collect();
                    let outcome = detector.process_cycle(&ballot);
                    if outcome.degraded {
                        degraded_cycles += 1;
                    }
                    for verdict in &outcome.verdicts {
                        if matches!(verdict, CrcVerdict::NoMajority) {
                            no_majority_cycles += 1;
                            push_event(
                                &mut events,
                                &mut events_truncated,
                                Event {
                                    cycle,
                                    kind: EventKind::NoMajority,
                                    ip: None,
                                    counter: None,
                                },
                            );
                        }
                    }
                    for record in &outcome.records {
                        push_event(
                            &mut events,
                            &mut events_truncated,
                            Event {
                                cycle,
                                kind: EventKind::CrcMinority,
                                ip: Some(record.ip.clone()),
                                counter: Some(record.count),
                            },
                        );
                        match record.action {
                            Some(CounterAction::Warn) => push_event(
                                &mut events,
                                &mut events_truncated,
                                Event {
                                    cycle,
                                    kind: EventKind::Warn,
                                    ip: Some(record.ip.clone()),
                                    counter: Some(record.count),
                                },
                            ),
                            Some(CounterAction::Replace) => {
                                replace_requests.push(record.ip.clone());
                                push_event(
                                    &mut events,
                                    &mut events_truncated,
                                    Event {
                                        cycle,
                                        kind: EventKind::Replace,
                                        ip: Some(record.ip.clone()),
                                        counter: Some(record.count),
                                    },
                                );
                            }
                            None => {}
                        }
                    }
                }
            }
            Scheme::Mv => {
                let detector = mv_detector.as_mut().expect("mv scheme owns a detector");
                let ballot: Vec<(&str, Word)> = live_refs.iter().map(|o| (o.ip, o.word)).collect();
                let (verdict, records) = detector.process_cycle(&ballot);
                emitted = verdict.emitted().copied();
                match &verdict {
                    MajorityVerdict::NoMajority => {
                        no_majority_cycles += 1;
                        push_event(
                            &mut events,
                            &mut events_truncated,
                            Event {
                                cycle,
                                kind: EventKind::NoMajority,
                                ip: None,
                                counter: None,
                            },
                        );
                    }
                    MajorityVerdict::PassThrough(_) => degraded_cycles += 1,
                    _ => {}
                }
                if live.len() == 2 {
                    degraded_cycles += 1;
                }
                for record in &records {
                    push_event(
                        &mut events,
                        &mut events_truncated,
                        Event {
                            cycle,
                            kind: EventKind::Dissent,
                            ip: Some(record.ip.clone()),
                            counter: Some(record.count),
                        },
                    );
                    match record.action {
                        Some(CounterAction::Warn) => push_event(
                            &mut events,
                            &mut events_truncated,
                            Event {
                                cycle,
                                kind: EventKind::Warn,
                                ip: Some(record.ip.clone()),
                                counter: Some(record.count),
                            },
                        ),
                        Some(CounterAction::Replace) => {
                            replace_requests.push(record.ip.clone());
                            push_event(
                                &mut events,
                                &mut events_truncated,
                                Event {
                                    cycle,
                                    kind: EventKind::Replace,
                                    ip: Some(record.ip.clone()),
                                    counter: Some(record.count),
                                },
                            );
                        }
                        None => {}
                    }
                }
            }
        }

        // replacements: queue head takes over, or the slot goes dark
        for ip in replace_requests {
            if let Some(slot) = fabric.slot_of(&ip) {
                if fabric.queue().is_empty() {
                    fabric.remove_ip(slot)?;
                } else {
                    fabric.begin_swap(slot, true)?;
                }
            }
            if first_detection.is_none() && infected.contains(&index_of[ip.as_str()]) {
                first_detection = Some(cycle);
            }
            replaced_ips.push(ip);
        }

        // output and selection statistics
        if let Some(word) = emitted {
            emitted_cycles += 1;
            if word != golden_word {
                emitted_mismatches += 1;
            }
        } else {
            no_output_cycles += 1;
        }
        let chose_infected = chosen_idx.is_some_and(|idx| infected.contains(&idx));
        if chose_infected {
            infected_selected += 1;
        }
        if !detected_before {
            pre_detect_cycles += 1;
            if chose_infected {
                pre_detect_selected += 1;
            }
        }

        // periodic rotation
        match rotator.maybe_rotate(&mut fabric, cycle) {
            RotateOutcome::NotDue => {}
            RotateOutcome::Rotated { incoming, .. } => {
                rotations += 1;
                push_event(
                    &mut events,
                    &mut events_truncated,
                    Event {
                        cycle,
                        kind: EventKind::Rotate,
                        ip: Some(incoming),
                        counter: None,
                    },
                );
            }
            RotateOutcome::SkippedEmptyQueue { .. } => push_event(
                &mut events,
                &mut events_truncated,
                Event {
                    cycle,
                    kind: EventKind::RotateSkipped,
                    ip: None,
                    counter: None,
                },
            ),
            RotateOutcome::DeferredBusy { .. } => push_event(
                &mut events,
                &mut events_truncated,
                Event {
                    cycle,
                    kind: EventKind::RotateDeferred,
                    ip: None,
                    counter: None,
                },
            ),
        }

        // first-party CRC logger on the attached IP's lines
        if let Some((attach_idx, log)) = &mut logger {
            input_trace.push(input);
            if let Some((_, _, word)) = live.iter().find(|(_, idx, _)| idx == attach_idx) {
                if log.should_log(cycle, &mut rng_logger) {
                    log.log_cycle(cycle, &input, word);
                }
            }
        }

        // the adversary reads the observable output stream
        if let Some((inf_idx, _, oracle)) = &mut oracle {
            let infected_live = live.iter().any(|(_, idx, _)| idx == inf_idx);
            if infected_live {
                let (observed, from_infected): (Option<Word>, bool) = match scenario.scheme {
                    // off-chip, the SB wire carries the obfuscated word
                    Scheme::Sb => match &sb_channel {
                        Some(channel) => (emitted.map(|w| channel.encode(&w, cycle)), true),
                        None => (emitted, true),
                    },
                    Scheme::LoggerOnly => (emitted, true),
                    Scheme::Mrvo | Scheme::Mcrc => (emitted, chosen_idx == Some(*inf_idx)),
                    // majority output never comes from the dissenting IP
                    Scheme::Mv => (emitted, false),
                };
                oracle.observe(cycle, &input, observed.as_ref(), from_infected);
            }
        }
    }

    let mut flags: Vec<String> = Vec::new();
    if infected.is_empty() {
        flags.push("no-infected-variants".into());
    }
    if infected.len() > 1 {
        flags.push("multiple-infected-variants".into());
    }
    if let (Some(sb), Some(channel)) = (&scenario.sb, &sb_channel) {
        if sb.rotation_period > 0 && !channel.rotation_effective() {
            flags.push("sb-rotation-noop".into());
        }
    }
    if events_truncated {
        flags.push("event-log-truncated".into());
    }

    let selection_scheme = matches!(scenario.scheme, Scheme::Mrvo | Scheme::Mcrc);
    let leak_window_full_run =
        selection_scheme && single_infected.is_some() && first_detection.is_none();
    if leak_window_full_run {
        flags.push("leak-window-spans-full-run".into());
    }
    let leak_window = match scenario.scheme {
        Scheme::Mrvo | Scheme::Mcrc => {
            single_infected.map(|_| pre_detect_selected as f64 / pre_detect_cycles.max(1) as f64)
        }
        Scheme::Mv => single_infected.map(|_| 0.0),
        _ => None,
    };

    let (attacker_bits, attacker_recovered) = match &oracle {
        Some((_, secret, oracle)) => (
            Some(oracle.bits_recovered()),
            Some(oracle.recovered_secret().as_ref() == Some(secret)),
        ),
        None => (None, None),
    };

    let final_counters = match (&mcrc_detector, &mv_detector) {
        (Some(d), _) => d.counters.snapshot().clone(),
        (_, Some(d)) => d.counters.snapshot().clone(),
        _ => BTreeMap::new(),
    };

    let report = RunReport {
        scheme: scenario.scheme,
        seed: scenario.seed,
        width,
        cycles: scenario.cycles,
        slots: scenario.slots,
        selection: scenario.selection,
        infected_ip_rate: infected_selected as f64 / scenario.cycles as f64,
        infected_output_rate: emitted_mismatches as f64 / scenario.cycles as f64,
        emitted_mismatches,
        emitted_cycles,
        no_output_cycles,
        degraded_cycles,
        no_majority_cycles,
        first_detection_cycle: first_detection,
        leak_window,
        leak_window_full_run,
        attacker_bits,
        attacker_recovered,
        rotations,
        scheme_score: scheme_score(scenario.scheme),
        flags,
        events,
    };

    Ok(RunOutput {
        report,
        logger: logger.map(|(_, log)| log),
        input_trace,
        final_counters,
        replaced_ips,
    })
}

/// One scheme's row in a comparison run.
#[derive(Clone, Debug)]
pub struct CompareRow {
    pub scheme: Scheme,
    pub leak_window: Option<f64>,
    pub leak_window_full_run: bool,
    pub first_detection_cycle: Option<u64>,
    pub emitted_mismatches: u64,
}

/// Runs the same base scenario under MRVO, MCRC, and MV and tabulates the
/// leakage window, first detection, and output corruption of each.
pub fn compare_schemes(base: &Scenario) -> Result<Vec<CompareRow>, Error> {
    if base.slots < 3 || base.slots.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "comparison runs all three multiplexing schemes and needs an odd \
             slot count >= 3 (got slots={})",
            base.slots
        )));
    }
    let mut rows = Vec::new();
    for scheme in [Scheme::Mrvo, Scheme::Mcrc, Scheme::Mv] {
        let mut scenario = base.clone();
        scenario.scheme = scheme;
        let output = run_scenario(&scenario)?;
        rows.push(CompareRow {
            scheme,
            leak_window: output.report.leak_window,
            leak_window_full_run: output.report.leak_window_full_run,
            first_detection_cycle: output.report.first_detection_cycle,
            emitted_mismatches: output.report.emitted_mismatches,
        });
    }
    Ok(rows)
}

/// Fixed-field text rendering of a comparison.
pub fn render_comparison(rows: &[CompareRow]) -> String {
    let mut s = String::from("comparison_version=1\n");
    for row in rows {
        s.push_str(&format!(
            "scheme={} leak_window={} leak_window_full_run={} first_detection={} mismatches={}\n",
            row.scheme.name(),
            row.leak_window
                .map_or_else(|| "none".into(), |w| format!("{w:.4}")),
            row.leak_window_full_run,
            row.first_detection_cycle
                .map_or_else(|| "none".into(), |c| c.to_string()),
            row.emitted_mismatches,
        ));
    }
    s
}
