//! Scenario runner and authority tooling for the Trojan-protection
//! simulator.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fabshield::authority::{self, AuthorityDb, TrojanReport};
use fabshield::engine::{compare_schemes, render_comparison, run_scenario};
use fabshield::mrvo::SelectionMode;
use fabshield::scenario::{presets, Scenario, Scheme};

#[derive(Parser)]
#[command(
    name = "fabshield",
    about = "Runtime hardware-Trojan protection schemes over a simulated IP fabric",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its report.
    Run(RunArgs),
    /// Run a base scenario under MRVO, MCRC, and MV and tabulate them.
    Compare(CompareArgs),
    /// Core certificate authority database operations.
    Authority {
        #[command(subcommand)]
        command: AuthorityCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML). Omit to build a demo scenario from flags.
    scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report to a file as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the CRC logger export here (requires a logger in the scenario).
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Load initial multiplexing weights from an authority export.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Demo scenario scheme (sb, mrvo, mcrc, mv) when no file is given.
    #[arg(long)]
    scheme: Option<String>,
    /// Selection mode for demo scenarios: unbiased or biased.
    #[arg(long, default_value = "unbiased")]
    selection: String,
    /// Variant count for demo scenarios.
    #[arg(long, default_value_t = 3)]
    ips: usize,
    /// Cycle budget for demo scenarios.
    #[arg(long, default_value_t = 1000)]
    cycles: u64,
    /// Fire the demo Trojan on odd cycles only instead of always.
    #[arg(long)]
    odd_cycles: bool,
    /// Replace threshold for demo scenarios.
    #[arg(long)]
    threshold: Option<u64>,
    /// Enable output-line obfuscation on top of any scheme.
    #[arg(long)]
    sb: bool,
    /// Obfuscation-function rotation period (with --sb).
    #[arg(long, default_value_t = 0)]
    sb_period: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// Base scenario file (TOML); the scheme field is overridden per row.
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AuthorityCommand {
    /// Evaluate one core family (variants from a scenario file) and update
    /// the database.
    Eval {
        #[arg(long)]
        db: PathBuf,
        /// Scenario file providing the variant definitions and width.
        #[arg(long)]
        scenario: PathBuf,
        /// Evaluation duration in cycles (defaults to the scenario budget).
        #[arg(long)]
        cycles: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Infection threshold used when creating a fresh database.
        #[arg(long, default_value_t = authority::DEFAULT_INFECTION_THRESHOLD)]
        threshold: u64,
    },
    /// Ingest a user report, replaying it against reference models when a
    /// scenario file provides them.
    Report {
        #[arg(long)]
        db: PathBuf,
        /// Report file (TOML).
        #[arg(long)]
        report: PathBuf,
        /// Scenario file whose variants serve as replay models.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = authority::DEFAULT_INFECTION_THRESHOLD)]
        threshold: u64,
    },
    /// Export per-core initial weights for biased multiplexing.
    Export {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the database records.
    Show {
        #[arg(long)]
        db: PathBuf,
    },
    /// Vendor-fix reset: zero a core's score and archive its evidence.
    Fix {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        core: String,
        #[arg(long, default_value_t = authority::DEFAULT_INFECTION_THRESHOLD)]
        threshold: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run_command(args),
        Command::Compare(args) => compare_command(args),
        Command::Authority { command } => authority_command(command),
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_file(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn demo_scenario(args: &RunArgs) -> Result<Scenario> {
    let scheme = Scheme::parse(args.scheme.as_deref().unwrap_or("mrvo"))?;
    let selection = match args.selection.as_str() {
        "unbiased" => SelectionMode::Unbiased,
        "biased" => SelectionMode::Biased,
        other => bail!("unknown selection `{other}` (expected unbiased or biased)"),
    };
    let seed = args.seed.unwrap_or(1);
    let mut scenario = match scheme {
        Scheme::Sb => presets::sb_experiment(args.cycles, seed, true),
        Scheme::LoggerOnly => {
            bail!("logger-only runs need a scenario file with a [logger] section")
        }
        _ => presets::selection_experiment(
            scheme,
            selection,
            args.ips,
            args.cycles,
            seed,
            args.odd_cycles,
        ),
    };
    if let Some(threshold) = args.threshold {
        scenario.threshold = threshold;
        scenario.warn_threshold = (threshold / 2).max(1);
    }
    Ok(scenario)
}

fn run_command(args: RunArgs) -> Result<()> {
    if args.scenario.is_some() && args.scheme.is_some() {
        bail!("give either a scenario file or --scheme demo flags, not both");
    }
    let mut scenario = match &args.scenario {
        Some(path) => load_scenario(path)?,
        None => demo_scenario(&args)?,
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if args.sb {
        scenario.sb = Some(fabshield::scenario::SbConfig {
            family_size: 2,
            rotation_period: args.sb_period,
        });
    }
    if let Some(path) = &args.weights {
        let exported = load_weights(path)?;
        let known: BTreeMap<String, u8> = exported
            .into_iter()
            .filter(|(id, _)| scenario.variants.iter().any(|v| &v.ip_id == id))
            .collect();
        scenario.initial_weights = Some(known);
    }

    let output = run_scenario(&scenario)?;
    let text = output.report.render();
    print!("{text}");
    if let Some(path) = &args.out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.log_out {
        let Some(logger) = &output.logger else {
            bail!("--log-out given but the scenario attaches no logger");
        };
        std::fs::write(path, logger.export())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn compare_command(args: CompareArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let rows = compare_schemes(&scenario)?;
    let text = render_comparison(&rows);
    print!("{text}");
    if let Some(path) = &args.out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn load_weights(path: &Path) -> Result<BTreeMap<String, u8>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: BTreeMap<String, u8> =
        toml::from_str(&text).with_context(|| format!("parsing weights {}", path.display()))?;
    Ok(map)
}

fn authority_command(command: AuthorityCommand) -> Result<()> {
    match command {
        AuthorityCommand::Eval {
            db,
            scenario,
            cycles,
            seed,
            threshold,
        } => {
            let source = load_scenario(&scenario)?;
            let cycles = cycles.unwrap_or(source.cycles);
            let seed = seed.unwrap_or(source.seed);
            let rows = authority::with_db_locked(&db, threshold, |db| {
                db.run_evaluation_batch(&source.variants, source.width, cycles, seed)
            })?;
            for row in rows {
                println!(
                    "core={} vendor={} score_added={} score={} status={}{}",
                    row.core_id,
                    row.vendor_id,
                    row.score_added,
                    row.warning_score,
                    row.status,
                    row.replaced_at
                        .map_or_else(String::new, |c| format!(" replaced_at={c}")),
                );
            }
            Ok(())
        }
        AuthorityCommand::Report {
            db,
            report,
            models,
            threshold,
        } => {
            let text = std::fs::read_to_string(&report)
                .with_context(|| format!("reading {}", report.display()))?;
            let report = TrojanReport::from_toml_str(&text)?;
            let model_scenario = models.as_deref().map(load_scenario).transpose()?;
            let verdict = authority::with_db_locked(&db, threshold, |db| {
                db.ingest_report(
                    report,
                    model_scenario.as_ref().map(|s| s.variants.as_slice()),
                )
            })?;
            match verdict {
                authority::ReportVerdict::Verified { reference } => {
                    println!("verdict=verified reference={reference}")
                }
                authority::ReportVerdict::Unverified { reference } => {
                    println!("verdict=unverified reference={reference}")
                }
                authority::ReportVerdict::Pending { reference } => {
                    println!("verdict=pending reference={reference}")
                }
            }
            Ok(())
        }
        AuthorityCommand::Export { db, out } => {
            let db = AuthorityDb::load(&db).with_context(|| format!("loading {}", db.display()))?;
            let mut text = String::new();
            for (core, weight) in db.export_weights() {
                text.push_str(&format!("{core} = {weight}\n"));
            }
            print!("{text}");
            if let Some(path) = &out {
                std::fs::write(path, &text)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        AuthorityCommand::Show { db } => {
            let db = AuthorityDb::load(&db).with_context(|| format!("loading {}", db.display()))?;
            print!("{}", db.render());
            Ok(())
        }
        AuthorityCommand::Fix {
            db,
            core,
            threshold,
        } => {
            authority::with_db_locked(&db, threshold, |db| db.vendor_fix(&core))?;
            println!("core={core} score=0 status=safe");
            Ok(())
        }
    }
}
