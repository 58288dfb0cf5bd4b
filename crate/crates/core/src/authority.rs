//! The core certificate authority: a persistent vendor/core reputation
//! database, warning-score classification, automated evaluation batches
//! built on majority voting, and user-report ingestion with replay
//! verification.
//!
//! The database is line-delimited structured text, one record per core,
//! human-diffable and versioned with a header line. Mutating CLI
//! invocations serialize through an exclusive lock file next to the
//! database; readers load a consistent snapshot in one read.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::engine::{run_scenario, RunOutput};
use crate::error::Error;
use crate::fabric::PrCostModel;
use crate::mrvo::SelectionMode;
use crate::mv::{majority_vote, MajorityVerdict};
use crate::scenario::{Scenario, Scheme};
use crate::variant::{IpVariant, VariantRuntime};
use crate::word::Word;

pub const DEFAULT_INFECTION_THRESHOLD: u64 = 5;
/// Slope of the buggy-core weight penalty in [`AuthorityDb::export_weights`].
pub const WEIGHT_PENALTY_PER_SCORE: u64 = 16;

const DB_HEADER: &str = "fabshield-authority-db v1";

/// Classification of a core by its accumulated warning score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoreStatus {
    Safe,
    Buggy,
    Infected,
}

impl fmt::Display for CoreStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoreStatus::Safe => "safe",
            CoreStatus::Buggy => "buggy",
            CoreStatus::Infected => "infected",
        })
    }
}

/// Pure classification rule: zero is safe, below the threshold is buggy,
/// at or above it is infected.
pub fn classify(score: u64, infection_threshold: u64) -> CoreStatus {
    debug_assert!(infection_threshold >= 1);
    if score == 0 {
        CoreStatus::Safe
    } else if score < infection_threshold {
        CoreStatus::Buggy
    } else {
        CoreStatus::Infected
    }
}

/// One database row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreRecord {
    pub core_id: String,
    pub vendor_id: String,
    pub warning_score: u64,
    /// Verified report references backing the score.
    pub evidence: Vec<String>,
    /// Reports whose replay showed no dissent; kept indefinitely.
    pub unverified: Vec<String>,
    /// Evidence retired by a vendor-fix reset.
    pub archive: Vec<String>,
}

impl CoreRecord {
    fn new(core_id: String, vendor_id: String) -> Self {
        CoreRecord {
            core_id,
            vendor_id,
            warning_score: 0,
            evidence: Vec::new(),
            unverified: Vec::new(),
            archive: Vec::new(),
        }
    }
}

/// A user-submitted Trojan report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrojanReport {
    pub reporter_id: String,
    pub core_id: String,
    pub width: usize,
    pub input_vector: Vec<Word>,
    pub observed_output: Vec<Word>,
    pub claim: String,
}

impl TrojanReport {
    pub fn validate(&self) -> Result<(), Error> {
        if self.input_vector.is_empty() {
            return Err(Error::Authority(
                "a report must carry the input vector at which the suspicious \
                 output occurred"
                    .into(),
            ));
        }
        if self.observed_output.len() != self.input_vector.len() {
            return Err(Error::Authority(
                "observed_output must be as long as input_vector".into(),
            ));
        }
        Ok(())
    }

    /// Parses the report file format (TOML mirroring the report fields).
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            reporter_id: String,
            core_id: String,
            width: usize,
            input_vector: Vec<String>,
            observed_output: Vec<String>,
            claim: String,
        }
        let raw: Raw =
            toml::from_str(text).map_err(|e| Error::Authority(format!("report parse: {e}")))?;
        let parse_words = |items: &[String]| -> Result<Vec<Word>, Error> {
            items.iter().map(|s| Word::from_hex(s, raw.width)).collect()
        };
        let report = TrojanReport {
            reporter_id: raw.reporter_id,
            core_id: raw.core_id,
            width: raw.width,
            input_vector: parse_words(&raw.input_vector)?,
            observed_output: parse_words(&raw.observed_output)?,
            claim: raw.claim,
        };
        report.validate()?;
        Ok(report)
    }
}

/// Outcome of ingesting one report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReportVerdict {
    /// Replay reproduced the dissent; score incremented.
    Verified { reference: String },
    /// Replay showed no dissent; archived, score unchanged.
    Unverified { reference: String },
    /// No replay models available; queued for later.
    Pending { reference: String },
}

/// A report waiting for replay models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingReport {
    pub reference: String,
    pub report: TrojanReport,
}

/// What one evaluation batch did to one core.
#[derive(Clone, Debug)]
pub struct BatchRow {
    pub core_id: String,
    pub vendor_id: String,
    pub score_added: u64,
    pub warning_score: u64,
    pub status: CoreStatus,
    pub replaced_at: Option<u64>,
}

/// The authority database.
#[derive(Clone, Debug, PartialEq)]
pub struct AuthorityDb {
    infection_threshold: u64,
    next_report_seq: u64,
    records: BTreeMap<String, CoreRecord>,
    pending: Vec<PendingReport>,
}

impl AuthorityDb {
    pub fn new(infection_threshold: u64) -> Result<Self, Error> {
        if infection_threshold == 0 {
            return Err(Error::Authority("infection threshold must be >= 1".into()));
        }
        Ok(AuthorityDb {
            infection_threshold,
            next_report_seq: 1,
            records: BTreeMap::new(),
            pending: Vec::new(),
        })
    }

    pub fn infection_threshold(&self) -> u64 {
        self.infection_threshold
    }

    pub fn record(&self, core_id: &str) -> Option<&CoreRecord> {
        self.records.get(core_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &CoreRecord> {
        self.records.values()
    }

    pub fn pending(&self) -> &[PendingReport] {
        &self.pending
    }

    pub fn status_of(&self, record: &CoreRecord) -> CoreStatus {
        classify(record.warning_score, self.infection_threshold)
    }

    /// Registers a core if unknown; rejects a core id resubmitted under a
    /// different vendor.
    pub fn register(&mut self, core_id: &str, vendor_id: &str) -> Result<(), Error> {
        match self.records.get(core_id) {
            None => {
                self.records.insert(
                    core_id.to_string(),
                    CoreRecord::new(core_id.to_string(), vendor_id.to_string()),
                );
                Ok(())
            }
            Some(existing) if existing.vendor_id == vendor_id => Ok(()),
            Some(existing) => Err(Error::Authority(format!(
                "core `{core_id}` already registered to vendor `{}`",
                existing.vendor_id
            ))),
        }
    }

    /// The automated evaluation batch: runs the submitted variants of one
    /// core family under majority voting for `cycles` cycles. A variant
    /// whose error counter exceeds the threshold is removed mid-run and its
    /// crossing count lands on its score immediately; at batch end every
    /// remaining variant's counter is added to its score.
    pub fn run_evaluation_batch(
        &mut self,
        variants: &[IpVariant],
        width: usize,
        cycles: u64,
        seed: u64,
    ) -> Result<Vec<BatchRow>, Error> {
        if variants.len() < 3 || variants.len().is_multiple_of(2) {
            return Err(Error::Authority(format!(
                "evaluation batch needs an odd number >= 3 of variants, got {}",
                variants.len()
            )));
        }
        if self.infection_threshold < 2 {
            return Err(Error::Authority(
                "evaluation batch needs infection threshold >= 2 (warning \
                 threshold must fit below it)"
                    .into(),
            ));
        }
        let mut vendors: Vec<&str> = variants.iter().map(|v| v.vendor_id.as_str()).collect();
        vendors.sort_unstable();
        vendors.dedup();
        if vendors.len() != variants.len() {
            return Err(Error::Authority(
                "duplicate vendor submissions in one batch are rejected".into(),
            ));
        }
        for v in variants {
            self.register(&v.ip_id, &v.vendor_id)?;
        }

        let scenario = Scenario {
            scheme: Scheme::Mv,
            width,
            cycles,
            slots: variants.len(),
            seed,
            selection: SelectionMode::Unbiased,
            warn_threshold: (self.infection_threshold / 2).max(1),
            threshold: self.infection_threshold,
            rotation_period: 0,
            cost: PrCostModel::default(),
            sb: None,
            logger: None,
            initial_weights: None,
            variants: variants.to_vec(),
        };
        let RunOutput {
            report,
            final_counters,
            replaced_ips,
            ..
        } = run_scenario(&scenario)?;

        let mut rows = Vec::with_capacity(variants.len());
        for v in variants {
            let replaced_at = replaced_ips.contains(&v.ip_id).then(|| {
                report
                    .events
                    .iter()
                    .find(|e| {
                        e.kind == crate::detector::EventKind::Replace
                            && e.ip.as_deref() == Some(v.ip_id.as_str())
                    })
                    .map(|e| e.cycle)
                    .unwrap_or(0)
            });
            let score_added = if replaced_at.is_some() {
                // the counter value at the crossing
                self.infection_threshold + 1
            } else {
                final_counters.get(&v.ip_id).copied().unwrap_or(0)
            };
            let record = self.records.get_mut(&v.ip_id).expect("registered above");
            record.warning_score += score_added;
            rows.push(BatchRow {
                core_id: v.ip_id.clone(),
                vendor_id: v.vendor_id.clone(),
                score_added,
                warning_score: record.warning_score,
                status: classify(record.warning_score, self.infection_threshold),
                replaced_at,
            });
        }
        Ok(rows)
    }

    /// Ingests a user report. With replay models available, the input
    /// vector is replayed against the reference set and the report is
    /// verified only if the named core dissents from the majority.
    pub fn ingest_report(
        &mut self,
        report: TrojanReport,
        models: Option<&[IpVariant]>,
    ) -> Result<ReportVerdict, Error> {
        report.validate()?;
        if !self.records.contains_key(&report.core_id) {
            return Err(Error::Authority(format!(
                "unknown core `{}`",
                report.core_id
            )));
        }
        let reference = format!("r{}.{}", self.next_report_seq, report.reporter_id);
        self.next_report_seq += 1;

        let Some(models) = models else {
            self.pending.push(PendingReport {
                reference: reference.clone(),
                report,
            });
            return Ok(ReportVerdict::Pending { reference });
        };
        if models.len() < 3 {
            return Err(Error::Authority(
                "replay needs at least three reference models".into(),
            ));
        }
        if !models.iter().any(|m| m.ip_id == report.core_id) {
            return Err(Error::Authority(format!(
                "replay model set does not include core `{}`",
                report.core_id
            )));
        }

        let dissented = replay_dissents(models, &report.core_id, &report.input_vector)?;
        let record = self
            .records
            .get_mut(&report.core_id)
            .expect("checked above");
        if dissented {
            record.warning_score += 1;
            record.evidence.push(reference.clone());
            Ok(ReportVerdict::Verified { reference })
        } else {
            record.unverified.push(reference.clone());
            Ok(ReportVerdict::Unverified { reference })
        }
    }

    /// Vendor proved the fault fixed: zero the score and retire evidence.
    pub fn vendor_fix(&mut self, core_id: &str) -> Result<(), Error> {
        let record = self
            .records
            .get_mut(core_id)
            .ok_or_else(|| Error::Authority(format!("unknown core `{core_id}`")))?;
        record.warning_score = 0;
        let mut retired = std::mem::take(&mut record.evidence);
        record.archive.append(&mut retired);
        Ok(())
    }

    /// Initial multiplexing weights from reputation: safe cores get the
    /// neutral prior, buggy cores a score-proportional penalty, infected
    /// cores zero (never selected under biased multiplexing).
    pub fn export_weights(&self) -> BTreeMap<String, u8> {
        self.records
            .values()
            .map(|r| {
                let weight = match self.status_of(r) {
                    CoreStatus::Safe => 128,
                    CoreStatus::Buggy => {
                        let penalty = WEIGHT_PENALTY_PER_SCORE * r.warning_score;
                        128u64.saturating_sub(penalty).max(1) as u8
                    }
                    CoreStatus::Infected => 0,
                };
                (r.core_id.clone(), weight)
            })
            .collect()
    }

    /// Renders the database file (also the shape `load` accepts).
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(DB_HEADER);
        s.push('\n');
        s.push_str(&format!("threshold={}\n", self.infection_threshold));
        s.push_str(&format!("next_report={}\n", self.next_report_seq));
        for r in self.records.values() {
            s.push_str(&format!(
                "core={} vendor={} score={} status={} evidence={} unverified={} archive={}\n",
                r.core_id,
                r.vendor_id,
                r.warning_score,
                classify(r.warning_score, self.infection_threshold),
                csv_or_dash(&r.evidence),
                csv_or_dash(&r.unverified),
                csv_or_dash(&r.archive),
            ));
        }
        for p in &self.pending {
            s.push_str(&format!(
                "pending={} reporter={} core={} width={} inputs={} outputs={} claim={}\n",
                p.reference,
                p.report.reporter_id,
                p.report.core_id,
                p.report.width,
                words_csv(&p.report.input_vector),
                words_csv(&p.report.observed_output),
                percent_encode(&p.report.claim),
            ));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Authority("empty database file".into()))?;
        if header != DB_HEADER {
            return Err(Error::Authority(format!(
                "unsupported database header `{header}`"
            )));
        }
        let threshold_line = lines
            .next()
            .and_then(|l| l.strip_prefix("threshold="))
            .ok_or_else(|| Error::Authority("missing threshold line".into()))?;
        let infection_threshold: u64 = threshold_line
            .parse()
            .map_err(|_| Error::Authority("bad threshold".into()))?;
        let next_line = lines
            .next()
            .and_then(|l| l.strip_prefix("next_report="))
            .ok_or_else(|| Error::Authority("missing next_report line".into()))?;
        let next_report_seq: u64 = next_line
            .parse()
            .map_err(|_| Error::Authority("bad next_report".into()))?;

        let mut db = AuthorityDb::new(infection_threshold)?;
        db.next_report_seq = next_report_seq;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields = parse_kv_line(line)?;
            if fields.first().is_some_and(|(k, _)| k == "core") {
                let get = |key: &str| -> Result<&str, Error> {
                    fields
                        .iter()
                        .find(|(k, _)| k == key)
                        .map(|(_, v)| v.as_str())
                        .ok_or_else(|| Error::Authority(format!("record missing `{key}`: {line}")))
                };
                let record = CoreRecord {
                    core_id: get("core")?.to_string(),
                    vendor_id: get("vendor")?.to_string(),
                    warning_score: get("score")?
                        .parse()
                        .map_err(|_| Error::Authority(format!("bad score: {line}")))?,
                    evidence: dash_or_csv(get("evidence")?),
                    unverified: dash_or_csv(get("unverified")?),
                    archive: dash_or_csv(get("archive")?),
                };
                let stored_status = get("status")?;
                let derived = classify(record.warning_score, infection_threshold).to_string();
                if stored_status != derived {
                    return Err(Error::Authority(format!(
                        "status `{stored_status}` does not match score {} at threshold {}",
                        record.warning_score, infection_threshold
                    )));
                }
                db.records.insert(record.core_id.clone(), record);
            } else if fields.first().is_some_and(|(k, _)| k == "pending") {
                let get = |key: &str| -> Result<&str, Error> {
                    fields
                        .iter()
                        .find(|(k, _)| k == key)
                        .map(|(_, v)| v.as_str())
                        .ok_or_else(|| Error::Authority(format!("pending missing `{key}`: {line}")))
                };
                let width: usize = get("width")?
                    .parse()
                    .map_err(|_| Error::Authority(format!("bad width: {line}")))?;
                let report = TrojanReport {
                    reporter_id: get("reporter")?.to_string(),
                    core_id: get("core")?.to_string(),
                    width,
                    input_vector: csv_words(get("inputs")?, width)?,
                    observed_output: csv_words(get("outputs")?, width)?,
                    claim: percent_decode(get("claim")?)?,
                };
                db.pending.push(PendingReport {
                    reference: get("pending")?.to_string(),
                    report,
                });
            } else {
                return Err(Error::Authority(format!("unrecognized line: {line}")));
            }
        }
        Ok(db)
    }
}

/// Replays the input vector through the reference models; true when the
/// named core dissents from a strict majority at any step.
fn replay_dissents(models: &[IpVariant], named: &str, inputs: &[Word]) -> Result<bool, Error> {
    let mut runtimes: Vec<(String, VariantRuntime)> = models
        .iter()
        .map(|m| Ok((m.ip_id.clone(), VariantRuntime::new(m.clone())?)))
        .collect::<Result<_, Error>>()?;
    for (cycle, input) in inputs.iter().enumerate() {
        let mut ballot: Vec<(&str, Word)> = Vec::with_capacity(runtimes.len());
        for (id, rt) in runtimes.iter_mut() {
            let word = rt.evaluate(input, cycle as u64);
            ballot.push((id.as_str(), word));
        }
        if let MajorityVerdict::Majority { dissenters, .. } = majority_vote(&ballot) {
            if dissenters.iter().any(|d| d == named) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Splits a `key=value key=value ...` line. Values never contain spaces
/// (ids are charset-checked, claims are percent-encoded).
fn parse_kv_line(line: &str) -> Result<Vec<(String, String)>, Error> {
    line.split(' ')
        .map(|field| {
            field
                .split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Authority(format!("malformed field `{field}` in: {line}")))
        })
        .collect()
}

fn csv_or_dash(items: &[String]) -> String {
    if items.is_empty() {
        "-".into()
    } else {
        items.join(",")
    }
}

fn dash_or_csv(text: &str) -> Vec<String> {
    if text == "-" {
        Vec::new()
    } else {
        text.split(',').map(str::to_string).collect()
    }
}

fn words_csv(words: &[Word]) -> String {
    words
        .iter()
        .map(|w| w.to_hex())
        .collect::<Vec<_>>()
        .join(",")
}

fn csv_words(text: &str, width: usize) -> Result<Vec<Word>, Error> {
    text.split(',').map(|s| Word::from_hex(s, width)).collect()
}

fn percent_encode(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for byte in text.bytes() {
        if byte.is_ascii_alphanumeric() || matches!(byte, b'_' | b'-' | b'.') {
            out.push(byte as char);
        } else {
            out.push_str(&format!("%{byte:02X}"));
        }
    }
    out
}

fn percent_decode(text: &str) -> Result<String, Error> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .ok_or_else(|| Error::Authority(format!("truncated escape in `{text}`")))?;
            let value = u8::from_str_radix(std::str::from_utf8(hex).unwrap_or("zz"), 16)
                .map_err(|_| Error::Authority(format!("bad escape in `{text}`")))?;
            out.push(value);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| Error::Authority(format!("non-UTF8 claim in `{text}`")))
}

/// Exclusive advisory lock for database mutation, held as a sibling
/// `.lock` file. Dropping the guard releases it.
pub struct DbLock {
    lock_path: PathBuf,
}

impl DbLock {
    pub fn acquire(db_path: &Path) -> Result<Self, Error> {
        let lock_path = db_path.with_extension("lock");
        for _ in 0..100 {
            match std::fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&lock_path)
            {
                Ok(_) => return Ok(DbLock { lock_path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    std::thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Authority(format!(
            "could not acquire database lock {}",
            lock_path.display()
        )))
    }
}

impl Drop for DbLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock_path);
    }
}

/// Loads (or creates) the database under an exclusive lock, applies the
/// mutation, and saves it back before releasing the lock.
pub fn with_db_locked<T>(
    path: &Path,
    infection_threshold: u64,
    mutate: impl FnOnce(&mut AuthorityDb) -> Result<T, Error>,
) -> Result<T, Error> {
    let _lock = DbLock::acquire(path)?;
    let mut db = if path.exists() {
        AuthorityDb::load(path)?
    } else {
        AuthorityDb::new(infection_threshold)?
    };
    let value = mutate(&mut db)?;
    db.save(path)?;
    Ok(value)
}
