//! First-party CRC logger: computes CRCs of a third-party IP's inputs and
//! outputs, keeps them in a bounded ring memory, and supports extraction
//! and offline comparison against a golden model.
//!
//! The logger is constructed by the harness, never by a variant definition;
//! module layering enforces that it cannot come from a third party.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::crc5::{crc5, Crc5Stream, CrcValue};
use crate::error::Error;
use crate::variant::{GoldenKind, GoldenState};
use crate::word::Word;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
        })
    }
}

/// One logged CRC. Entries are ordered by (cycle, direction with input
/// before output, block order within the cycle).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub cycle: u64,
    pub direction: Direction,
    pub crc: CrcValue,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.cycle, self.direction, self.crc)
    }
}

/// When the logger listens.
#[derive(Clone, Debug, PartialEq)]
pub enum EnableMode {
    Always,
    /// Inclusive cycle ranges.
    Windows(Vec<(u64, u64)>),
    /// Each cycle enabled independently with probability p, drawn from the
    /// run's seeded stream.
    RandomDuty(f64),
}

#[derive(Clone, Debug)]
pub struct LoggerConfig {
    pub capacity: usize,
    pub mode: EnableMode,
}

impl LoggerConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.capacity == 0 {
            return Err(Error::Config("logger capacity must be at least 1".into()));
        }
        if let EnableMode::RandomDuty(p) = self.mode {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("duty probability {p} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// The logger itself: two CRC streams (input side, output side) feeding a
/// bounded ring of entries.
#[derive(Clone, Debug)]
pub struct CrcLogger {
    config: LoggerConfig,
    input_stream: Crc5Stream,
    output_stream: Crc5Stream,
    ring: VecDeque<LogEntry>,
    overwrites: u64,
    enabled_cycles: Vec<u64>,
}

impl CrcLogger {
    pub fn new(config: LoggerConfig) -> Result<Self, Error> {
        config.validate()?;
        Ok(CrcLogger {
            config,
            input_stream: Crc5Stream::new(),
            output_stream: Crc5Stream::new(),
            ring: VecDeque::new(),
            overwrites: 0,
            enabled_cycles: Vec::new(),
        })
    }

    /// Whether this cycle should be logged. RandomDuty draws from `rng`
    /// every cycle so the schedule is a pure function of the seed.
    pub fn should_log(&self, cycle: u64, rng: &mut impl Rng) -> bool {
        match &self.config.mode {
            EnableMode::Always => true,
            EnableMode::Windows(ranges) => {
                ranges.iter().any(|(lo, hi)| (*lo..=*hi).contains(&cycle))
            }
            EnableMode::RandomDuty(p) => rng.gen_bool(*p),
        }
    }

    /// Logs one enabled cycle: input word first, then output word.
    pub fn log_cycle(&mut self, cycle: u64, input: &Word, output: &Word) {
        self.enabled_cycles.push(cycle);
        for crc in self.input_stream.feed(input) {
            self.push(LogEntry {
                cycle,
                direction: Direction::Input,
                crc,
            });
        }
        for crc in self.output_stream.feed(output) {
            self.push(LogEntry {
                cycle,
                direction: Direction::Output,
                crc,
            });
        }
    }

    fn push(&mut self, entry: LogEntry) {
        if self.ring.len() == self.config.capacity {
            self.ring.pop_front();
            self.overwrites += 1;
        }
        self.ring.push_back(entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &LogEntry> {
        self.ring.iter()
    }

    pub fn overwrites(&self) -> u64 {
        self.overwrites
    }

    /// One `cycle,direction,crc-hex` line per retained entry.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for entry in &self.ring {
            out.push_str(&entry.to_string());
            out.push('\n');
        }
        out
    }

    /// Recomputes golden CRCs from the input trace that drove the logged
    /// run and reports every retained output entry whose CRC disagrees.
    /// Retained input entries must match the trace exactly; a diverging
    /// input CRC or an out-of-range cycle is an alignment error.
    pub fn extract_and_compare(
        &self,
        golden: GoldenKind,
        input_trace: &[Word],
    ) -> Result<Vec<(u64, Direction)>, Error> {
        // golden outputs need the full trace: the model may be stateful
        let mut state = GoldenState::new();
        let golden_outputs: Vec<Word> = input_trace
            .iter()
            .map(|input| state.eval(golden, input))
            .collect();

        // replay the enabled cycles through fresh CRC streams
        let mut expected = Vec::new();
        let mut input_stream = Crc5Stream::new();
        let mut output_stream = Crc5Stream::new();
        for &cycle in &self.enabled_cycles {
            let Some(input) = input_trace.get(cycle as usize) else {
                return Err(Error::TraceMisaligned {
                    cycle,
                    detail: "input trace ends before a logged cycle".into(),
                });
            };
            for crc in input_stream.feed(input) {
                expected.push(LogEntry {
                    cycle,
                    direction: Direction::Input,
                    crc,
                });
            }
            for crc in output_stream.feed(&golden_outputs[cycle as usize]) {
                expected.push(LogEntry {
                    cycle,
                    direction: Direction::Output,
                    crc,
                });
            }
        }

        if self.ring.len() > expected.len() {
            return Err(Error::TraceMisaligned {
                cycle: self.ring.front().map_or(0, |e| e.cycle),
                detail: "log holds more entries than the trace can produce".into(),
            });
        }
        let offset = expected.len() - self.ring.len();
        let mut mismatches = Vec::new();
        for (logged, expect) in self.ring.iter().zip(&expected[offset..]) {
            if logged.cycle != expect.cycle || logged.direction != expect.direction {
                return Err(Error::TraceMisaligned {
                    cycle: logged.cycle,
                    detail: format!(
                        "logged ({},{}) where trace replay expects ({},{})",
                        logged.cycle, logged.direction, expect.cycle, expect.direction
                    ),
                });
            }
            match logged.direction {
                Direction::Input => {
                    if logged.crc != expect.crc {
                        return Err(Error::TraceMisaligned {
                            cycle: logged.cycle,
                            detail: "input CRC disagrees with the driving trace".into(),
                        });
                    }
                }
                Direction::Output => {
                    if logged.crc != expect.crc {
                        mismatches.push((logged.cycle, Direction::Output));
                    }
                }
            }
        }
        Ok(mismatches)
    }
}

/// Parses an exported log back into entries.
pub fn parse_entries(text: &str) -> Result<Vec<LogEntry>, Error> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || Error::Config(format!("log line {}: `{line}`", lineno + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let cycle: u64 = parts[0].parse().map_err(|_| bad())?;
        let direction = match parts[1] {
            "input" => Direction::Input,
            "output" => Direction::Output,
            _ => return Err(bad()),
        };
        let crc_word = Word::from_hex(parts[2], 8).map_err(|_| bad())?;
        if crc_word.to_u64() >= 32 {
            return Err(bad());
        }
        // re-derive the CrcValue through a block with that remainder
        let crc = (0..=255u8)
            .map(crc5)
            .find(|c| u64::from(c.value()) == crc_word.to_u64())
            .ok_or_else(bad)?;
        entries.push(LogEntry {
            cycle,
            direction,
            crc,
        });
    }
    Ok(entries)
}

/// Offline comparison of an exported log against a golden replay, for
/// block-aligned widths (multiples of 8): every entry is self-contained
/// within its cycle, so the enable schedule is not needed.
pub fn compare_entries(
    entries: &[LogEntry],
    golden: GoldenKind,
    input_trace: &[Word],
    width: usize,
) -> Result<Vec<(u64, Direction)>, Error> {
    if !width.is_multiple_of(8) {
        return Err(Error::Config(
            "offline comparison requires a width that is a multiple of 8".into(),
        ));
    }
    let mut state = GoldenState::new();
    let golden_outputs: Vec<Word> = input_trace
        .iter()
        .map(|input| state.eval(golden, input))
        .collect();

    let mut mismatches = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let cycle = entries[i].cycle;
        let Some(input) = input_trace.get(cycle as usize) else {
            return Err(Error::TraceMisaligned {
                cycle,
                detail: "input trace ends before a logged cycle".into(),
            });
        };
        let mut in_stream = Crc5Stream::new();
        let mut out_stream = Crc5Stream::new();
        let expect_in = in_stream.feed(input);
        let expect_out = out_stream.feed(&golden_outputs[cycle as usize]);

        // group all entries of this cycle, inputs first
        let group_end = entries[i..]
            .iter()
            .position(|e| e.cycle != cycle)
            .map_or(entries.len(), |p| i + p);
        let group = &entries[i..group_end];
        let inputs: Vec<&LogEntry> = group
            .iter()
            .filter(|e| e.direction == Direction::Input)
            .collect();
        let outputs: Vec<&LogEntry> = group
            .iter()
            .filter(|e| e.direction == Direction::Output)
            .collect();

        // a truncated leading cycle (ring eviction) may hold fewer blocks;
        // align each list against the tail of the expected blocks
        if inputs.len() > expect_in.len() || outputs.len() > expect_out.len() {
            return Err(Error::TraceMisaligned {
                cycle,
                detail: "more logged blocks than the word width allows".into(),
            });
        }
        for (logged, expect) in inputs
            .iter()
            .zip(&expect_in[expect_in.len() - inputs.len()..])
        {
            if logged.crc != *expect {
                return Err(Error::TraceMisaligned {
                    cycle,
                    detail: "input CRC disagrees with the driving trace".into(),
                });
            }
        }
        for (logged, expect) in outputs
            .iter()
            .zip(&expect_out[expect_out.len() - outputs.len()..])
        {
            if logged.crc != *expect {
                mismatches.push((cycle, Direction::Output));
            }
        }
        i = group_end;
    }
    Ok(mismatches)
}
