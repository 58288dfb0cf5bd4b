//! Scenario configuration: the TOML schema describing a run (scheme, word
//! width, cycle budget, slots, cost model, variants with optional Trojans,
//! seed) and its validation into checked internal types.
//!
//! Scheme constraints are enforced at load time: MV needs an odd slot count
//! of at least three, MCRC at least three, SB exactly one suspected IP, and
//! every variant in a scenario shares one golden model and the scenario
//! width.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::Error;
use crate::fabric::PrCostModel;
use crate::logger::{EnableMode, LoggerConfig};
use crate::mrvo::SelectionMode;
use crate::trojan::{Payload, Trigger, TrojanSpec};
use crate::variant::{GoldenKind, IpId, IpVariant};
use crate::word::Word;

/// The protection/detection scheme a run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Sb,
    Mrvo,
    Mcrc,
    Mv,
    LoggerOnly,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sb => "sb",
            Scheme::Mrvo => "mrvo",
            Scheme::Mcrc => "mcrc",
            Scheme::Mv => "mv",
            Scheme::LoggerOnly => "logger-only",
        }
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        match text {
            "sb" => Ok(Scheme::Sb),
            "mrvo" => Ok(Scheme::Mrvo),
            "mcrc" => Ok(Scheme::Mcrc),
            "mv" => Ok(Scheme::Mv),
            "logger-only" => Ok(Scheme::LoggerOnly),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected sb, mrvo, mcrc, mv, logger-only)"
            ))),
        }
    }
}

/// SB channel settings: obfuscation on every variant output line.
#[derive(Clone, Debug)]
pub struct SbConfig {
    pub family_size: usize,
    pub rotation_period: u64,
}

/// Logger attachment: which IP's input/output lines the CRC logger taps.
#[derive(Clone, Debug)]
pub struct LoggerAttach {
    pub attach_to: IpId,
    pub config: LoggerConfig,
}

/// A fully validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub scheme: Scheme,
    pub width: usize,
    pub cycles: u64,
    pub slots: usize,
    pub seed: u64,
    pub selection: SelectionMode,
    pub warn_threshold: u64,
    pub threshold: u64,
    pub rotation_period: u64,
    pub cost: PrCostModel,
    pub sb: Option<SbConfig>,
    pub logger: Option<LoggerAttach>,
    pub initial_weights: Option<BTreeMap<IpId, u8>>,
    pub variants: Vec<IpVariant>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse: {e}")))?;
        raw.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn golden_kind(&self) -> GoldenKind {
        self.variants[0].golden
    }

    pub fn infected_ids(&self) -> Vec<IpId> {
        self.variants
            .iter()
            .filter(|v| v.trojan.is_some())
            .map(|v| v.ip_id.clone())
            .collect()
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    scheme: String,
    width: usize,
    cycles: u64,
    slots: usize,
    seed: u64,
    selection: Option<String>,
    threshold: Option<u64>,
    warn_threshold: Option<u64>,
    rotation_period: Option<u64>,
    cost_model: Option<RawCostModel>,
    sb: Option<RawSb>,
    logger: Option<RawLogger>,
    initial_weights: Option<BTreeMap<String, u8>>,
    variants: Vec<RawVariant>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCostModel {
    swap_cycles: Option<u64>,
    full_program_cycles: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSb {
    enabled: Option<bool>,
    family_size: Option<usize>,
    rotation_period: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLogger {
    capacity: usize,
    mode: String,
    duty: Option<f64>,
    windows: Option<Vec<(u64, u64)>>,
    attach_to: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    id: String,
    vendor: String,
    golden: String,
    trojan: Option<RawTrojan>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrojan {
    trigger: String,
    counter: Option<u64>,
    pattern: Option<String>,
    payload: String,
    mask: Option<String>,
    secret: Option<String>,
    secret_width: Option<usize>,
    lfsr_seed: Option<u16>,
}

impl RawScenario {
    fn validate(self) -> Result<Scenario, Error> {
        let scheme = Scheme::parse(&self.scheme)?;
        Word::try_zero(self.width)?;
        if self.cycles == 0 {
            return Err(Error::Config("cycles must be at least 1".into()));
        }
        if self.slots == 0 {
            return Err(Error::Config("slots must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }

        // scheme-specific shape
        match scheme {
            Scheme::Sb => {
                if self.variants.len() != 1 {
                    return Err(Error::Config(format!(
                        "scheme sb runs one suspected IP, got {} variants",
                        self.variants.len()
                    )));
                }
            }
            Scheme::LoggerOnly => {
                if self.logger.is_none() {
                    return Err(Error::Config(
                        "scheme logger-only requires a [logger] section".into(),
                    ));
                }
            }
            Scheme::Mrvo => {
                if self.slots < 2 || self.variants.len() < self.slots {
                    return Err(Error::Config(format!(
                        "scheme mrvo needs slots >= 2 and variants >= slots \
                         (got slots={}, variants={})",
                        self.slots,
                        self.variants.len()
                    )));
                }
            }
            Scheme::Mcrc => {
                if self.slots < 3 || self.variants.len() < self.slots {
                    return Err(Error::Config(format!(
                        "scheme mcrc needs slots >= 3 and variants >= slots \
                         (got slots={}, variants={})",
                        self.slots,
                        self.variants.len()
                    )));
                }
            }
            Scheme::Mv => {
                if self.slots < 3
                    || self.slots.is_multiple_of(2)
                    || self.variants.len() < self.slots
                {
                    return Err(Error::Config(format!(
                        "scheme mv needs an odd slot count >= 3 and variants >= slots \
                         (got slots={}, variants={})",
                        self.slots,
                        self.variants.len()
                    )));
                }
            }
        }

        let selection = match self.selection.as_deref() {
            None | Some("unbiased") => SelectionMode::Unbiased,
            Some("biased") => SelectionMode::Biased,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown selection `{other}` (expected unbiased or biased)"
                )))
            }
        };

        let warn_threshold = self
            .warn_threshold
            .unwrap_or(crate::detector::DEFAULT_WARN_THRESHOLD);
        let threshold = self.threshold.unwrap_or(crate::detector::DEFAULT_THRESHOLD);
        if warn_threshold == 0 || warn_threshold >= threshold {
            return Err(Error::Config(format!(
                "require 1 <= warn_threshold < threshold (got {warn_threshold}, {threshold})"
            )));
        }

        let cost = match self.cost_model {
            None => PrCostModel::default(),
            Some(raw) => match raw.swap_cycles {
                Some(swap) => PrCostModel::new(swap, raw.full_program_cycles)?,
                None => PrCostModel::from_full(raw.full_program_cycles),
            },
        };

        let mut variants = Vec::with_capacity(self.variants.len());
        let mut golden: Option<GoldenKind> = None;
        for raw in self.variants {
            let v = raw.validate(self.width)?;
            match golden {
                None => golden = Some(v.golden),
                Some(kind) if kind == v.golden => {}
                Some(kind) => {
                    return Err(Error::Config(format!(
                        "all variants must share one golden model; `{}` is {:?}, expected {:?}",
                        v.ip_id, v.golden, kind
                    )));
                }
            }
            if let Some(required) = v.golden.required_width() {
                if required != self.width {
                    return Err(Error::Config(format!(
                        "golden model {:?} requires width {required}, scenario width is {}",
                        v.golden, self.width
                    )));
                }
            }
            variants.push(v);
        }
        let mut ids: Vec<&str> = variants.iter().map(|v| v.ip_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != variants.len() {
            return Err(Error::Config("variant ids must be unique".into()));
        }

        let sb = match self.sb {
            Some(raw) if raw.enabled.unwrap_or(true) => {
                let family_size = raw.family_size.unwrap_or(2);
                if family_size == 0 {
                    return Err(Error::Config("sb family_size must be at least 1".into()));
                }
                Some(SbConfig {
                    family_size,
                    rotation_period: raw.rotation_period.unwrap_or(0),
                })
            }
            _ if scheme == Scheme::Sb => Some(SbConfig {
                family_size: 2,
                rotation_period: 0,
            }),
            _ => None,
        };

        let logger = match self.logger {
            None => None,
            Some(raw) => {
                let mode = match raw.mode.as_str() {
                    "always" => EnableMode::Always,
                    "random-duty" => EnableMode::RandomDuty(raw.duty.ok_or_else(|| {
                        Error::Config("logger mode random-duty requires `duty`".into())
                    })?),
                    "windows" => EnableMode::Windows(raw.windows.clone().ok_or_else(|| {
                        Error::Config("logger mode windows requires `windows`".into())
                    })?),
                    other => {
                        return Err(Error::Config(format!(
                            "unknown logger mode `{other}` (expected always, random-duty, windows)"
                        )))
                    }
                };
                let attach_to = raw.attach_to.unwrap_or_else(|| variants[0].ip_id.clone());
                if !variants.iter().any(|v| v.ip_id == attach_to) {
                    return Err(Error::Config(format!(
                        "logger attach_to `{attach_to}` names no variant"
                    )));
                }
                let config = LoggerConfig {
                    capacity: raw.capacity,
                    mode,
                };
                config.validate()?;
                Some(LoggerAttach { attach_to, config })
            }
        };

        if let Some(weights) = &self.initial_weights {
            for id in weights.keys() {
                if !variants.iter().any(|v| &v.ip_id == id) {
                    return Err(Error::Config(format!(
                        "initial_weights names unknown variant `{id}`"
                    )));
                }
            }
        }

        Ok(Scenario {
            scheme,
            width: self.width,
            cycles: self.cycles,
            slots: self.slots,
            seed: self.seed,
            selection,
            warn_threshold,
            threshold,
            rotation_period: self.rotation_period.unwrap_or(0),
            cost,
            sb,
            logger,
            initial_weights: self.initial_weights,
            variants,
        })
    }
}

impl RawVariant {
    fn validate(self, width: usize) -> Result<IpVariant, Error> {
        if !valid_id(&self.id) || !valid_id(&self.vendor) {
            return Err(Error::Config(format!(
                "ids must be non-empty [A-Za-z0-9_.-]: id=`{}` vendor=`{}`",
                self.id, self.vendor
            )));
        }
        let golden = match self.golden.as_str() {
            "identity" => GoldenKind::Identity,
            "alu8" => GoldenKind::Alu8,
            "serial1" => GoldenKind::Serial1,
            other => {
                return Err(Error::Config(format!(
                    "unknown golden model `{other}` (expected identity, alu8, serial1)"
                )))
            }
        };
        let trojan = self.trojan.map(|raw| raw.validate(width)).transpose()?;
        Ok(IpVariant {
            ip_id: self.id,
            vendor_id: self.vendor,
            golden,
            trojan,
        })
    }
}

impl RawTrojan {
    fn validate(self, width: usize) -> Result<TrojanSpec, Error> {
        let trigger = match self.trigger.as_str() {
            "always" => Trigger::Always,
            "odd-cycles" => Trigger::OddCycles,
            "internal-counter" => {
                let n = self.counter.ok_or_else(|| {
                    Error::Config("trigger internal-counter requires `counter`".into())
                })?;
                if n == 0 {
                    return Err(Error::Config("trigger counter must be positive".into()));
                }
                Trigger::InternalCounter(n)
            }
            "external-pattern" => {
                let text = self.pattern.as_deref().ok_or_else(|| {
                    Error::Config("trigger external-pattern requires `pattern`".into())
                })?;
                Trigger::ExternalPattern(Word::from_hex(text, width)?)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown trigger `{other}` (expected always, odd-cycles, \
                     internal-counter, external-pattern)"
                )))
            }
        };
        let payload = match self.payload.as_str() {
            "disrupt-flip" => {
                let text = self
                    .mask
                    .as_deref()
                    .ok_or_else(|| Error::Config("payload disrupt-flip requires `mask`".into()))?;
                let mask = Word::from_hex(text, width)?;
                if mask == Word::zero(width) {
                    return Err(Error::Config("disrupt-flip mask must be non-zero".into()));
                }
                Payload::DisruptFlip { mask }
            }
            "leak-xor-prng" => {
                let text = self.secret.as_deref().ok_or_else(|| {
                    Error::Config("payload leak-xor-prng requires `secret`".into())
                })?;
                let secret_width = self.secret_width.ok_or_else(|| {
                    Error::Config("payload leak-xor-prng requires `secret_width`".into())
                })?;
                let secret = Word::from_hex(text, secret_width)?;
                let lfsr_seed = self.lfsr_seed.unwrap_or(0xACE1);
                if lfsr_seed == 0 {
                    return Err(Error::Config("lfsr_seed must be non-zero".into()));
                }
                Payload::LeakXorPrng { secret, lfsr_seed }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown payload `{other}` (expected disrupt-flip, leak-xor-prng)"
                )))
            }
        };
        Ok(TrojanSpec { trigger, payload })
    }
}


/// Canonical demo scenarios: the shapes used by the selection-probability
/// experiment, the leakage-window measurement, and the obfuscation demo.
/// The CLI quick-run flags and the test suites build on these.
pub mod presets {
    use super::*;

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

    fn base(scheme: Scheme, ips: usize, cycles: u64, seed: u64) -> Scenario {
        Scenario {
            scheme,
            width: 8,
            cycles,
            slots: ips,
            seed,
            selection: SelectionMode::Unbiased,
            warn_threshold: crate::detector::DEFAULT_WARN_THRESHOLD,
            threshold: crate::detector::DEFAULT_THRESHOLD,
            rotation_period: 0,
            cost: PrCostModel::default(),
            sb: None,
            logger: None,
            initial_weights: None,
            variants: identity_variants(ips),
        }
    }

    /// The selection-probability experiment: `ips` identity variants, the
    /// last one carrying an output-corrupting Trojan active always or on
    /// odd cycles only.
    pub fn selection_experiment(
        scheme: Scheme,
        selection: SelectionMode,
        ips: usize,
        cycles: u64,
        seed: u64,
        odd_cycles_only: bool,
    ) -> Scenario {
        let mut scenario = base(scheme, ips, cycles, seed);
        scenario.selection = selection;
        let infected = scenario.variants.last_mut().expect("ips >= 1");
        infected.trojan = Some(TrojanSpec {
            trigger: if odd_cycles_only {
                Trigger::OddCycles
            } else {
                Trigger::Always
            },
            payload: Payload::DisruptFlip {
                mask: Word::from_u64(0x01, 8),
            },
        });
        scenario
    }

    /// The leakage-window measurement: fair multiplexing over `ips`
    /// variants, one of which leaks a 64-bit secret through the spare
    /// output lane. The replace threshold controls how long the detector
    /// takes, and with it the pre-detection window length.
    pub fn leak_experiment(
        scheme: Scheme,
        ips: usize,
        cycles: u64,
        seed: u64,
        threshold: u64,
    ) -> Scenario {
        let mut scenario = base(scheme, ips, cycles, seed);
        scenario.threshold = threshold;
        scenario.warn_threshold = (threshold / 2).max(1);
        let infected = scenario.variants.last_mut().expect("ips >= 1");
        infected.trojan = Some(TrojanSpec {
            trigger: Trigger::Always,
            payload: Payload::LeakXorPrng {
                secret: Word::from_u64(0xC3A5_1EF7_0123_8899, 64),
                lfsr_seed: 0xACE1,
            },
        });
        scenario
    }

    /// The obfuscation demo: one suspected IP leaking its secret, with the
    /// output channel obfuscated (or not, for the undefended baseline).
    pub fn sb_experiment(cycles: u64, seed: u64, obfuscate: bool) -> Scenario {
        let mut scenario = base(Scheme::Sb, 1, cycles, seed);
        scenario.sb = obfuscate.then_some(SbConfig {
            family_size: 2,
            rotation_period: 0,
        });
        let suspected = &mut scenario.variants[0];
        suspected.trojan = Some(TrojanSpec {
            trigger: Trigger::OddCycles,
            payload: Payload::LeakXorPrng {
                secret: Word::from_u64(0xC3A5_1EF7_0123_8899, 64),
                lfsr_seed: 0xACE1,
            },
        });
        scenario
    }
}
