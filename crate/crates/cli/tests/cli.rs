//! End-to-end CLI checks: scenario files load, reports render with stable
//! fields, and the authority subcommands drive the database file.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fabshield"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf8 stdout")
}

#[test]
fn run_scenario_file_and_seed_override() {
    let scenario = scenarios().join("selection_demo.toml");
    let first = stdout(&run_ok(
        bin().args(["run"]).arg(&scenario).args(["--seed", "5"]),
    ));
    assert!(first.contains("scheme=mrvo"));
    assert!(first.contains("seed=5"));
    assert!(first.contains("infected_ip_rate=0.3"), "{first}");

    let again = stdout(&run_ok(
        bin().args(["run"]).arg(&scenario).args(["--seed", "5"]),
    ));
    assert_eq!(first, again, "same file and seed must render identically");
}

#[test]
fn run_demo_flags() {
    let output = stdout(&run_ok(bin().args([
        "run",
        "--scheme",
        "mcrc",
        "--selection",
        "biased",
        "--ips",
        "3",
        "--cycles",
        "1000",
        "--seed",
        "3",
    ])));
    assert!(output.contains("scheme=mcrc"));
    assert!(output.contains("selection=biased"));
    assert!(output.contains("first_detection_cycle="));
}

#[test]
fn run_rejects_both_file_and_scheme() {
    let scenario = scenarios().join("selection_demo.toml");
    let output = bin()
        .args(["run"])
        .arg(&scenario)
        .args(["--scheme", "mv"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn invalid_scenario_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenarios().join("selection_demo.toml"))
        .unwrap()
        .replace("scheme = \"mrvo\"", "scheme = \"mv\"")
        .replace("slots = 3", "slots = 4");
    std::fs::write(&bad, text).unwrap();
    let output = bin().args(["run"]).arg(&bad).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("odd slot count"), "{stderr}");
}

#[test]
fn compare_emits_three_rows() {
    let scenario = scenarios().join("mcrc_leak.toml");
    let output = stdout(&run_ok(
        bin().args(["compare"]).arg(&scenario).args(["--seed", "4"]),
    ));
    assert!(output.contains("scheme=mrvo"));
    assert!(output.contains("scheme=mcrc"));
    assert!(output.contains("scheme=mv leak_window=0.0000"));
    assert!(output.contains("mismatches=0"));
}

#[test]
fn logger_export_writes_entries() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("dut.log");
    let scenario = scenarios().join("logger_demo.toml");
    run_ok(
        bin()
            .args(["run"])
            .arg(&scenario)
            .arg("--log-out")
            .arg(&log_path),
    );
    let text = std::fs::read_to_string(&log_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 512, "256 cycles, input and output entries");
    assert!(lines[0].starts_with("0,input,0x"));
    assert!(lines[1].starts_with("0,output,0x"));
}

#[test]
fn authority_eval_report_export_flow() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("authority.db");
    let family = scenarios().join("authority_family.toml");

    // evaluation batch: the pattern-triggered corruptor picks up a score
    let eval = stdout(&run_ok(
        bin()
            .args(["authority", "eval"])
            .arg("--db")
            .arg(&db)
            .arg("--scenario")
            .arg(&family)
            .args(["--cycles", "1000", "--seed", "2"]),
    ));
    assert!(eval.contains("core=core_a vendor=acme score_added=0 score=0 status=safe"));
    assert!(eval.contains("core=core_b"), "{eval}");

    // a user report reproducing the trigger input verifies against the family
    let report = scenarios().join("report_example.toml");
    let verdict = stdout(&run_ok(
        bin()
            .args(["authority", "report"])
            .arg("--db")
            .arg(&db)
            .arg("--report")
            .arg(&report)
            .arg("--models")
            .arg(&family),
    ));
    assert!(verdict.contains("verdict=verified"), "{verdict}");

    // the same report without models queues pending
    let pending = stdout(&run_ok(
        bin()
            .args(["authority", "report"])
            .arg("--db")
            .arg(&db)
            .arg("--report")
            .arg(&report),
    ));
    assert!(pending.contains("verdict=pending"), "{pending}");

    let shown = stdout(&run_ok(
        bin().args(["authority", "show"]).arg("--db").arg(&db),
    ));
    assert!(shown.starts_with("fabshield-authority-db v1"));
    assert!(shown.contains("core=core_b vendor=initech"));
    assert!(shown.contains("pending="));

    let weights = stdout(&run_ok(
        bin().args(["authority", "export"]).arg("--db").arg(&db),
    ));
    assert!(weights.contains("core_a = 128"));
    assert!(weights.contains("core_b = "));

    // weights export feeds straight back into a run
    let weights_path = dir.path().join("weights.toml");
    run_ok(
        bin()
            .args(["authority", "export"])
            .arg("--db")
            .arg(&db)
            .arg("--out")
            .arg(&weights_path),
    );
    let run = stdout(&run_ok(
        bin()
            .args(["run"])
            .arg(scenarios().join("selection_demo.toml"))
            .arg("--weights")
            .arg(&weights_path),
    ));
    assert!(run.contains("report_version=1"));
}

#[test]
fn authority_fix_resets_score() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("authority.db");
    let family = scenarios().join("authority_family.toml");
    run_ok(
        bin()
            .args(["authority", "eval"])
            .arg("--db")
            .arg(&db)
            .arg("--scenario")
            .arg(&family)
            .args(["--cycles", "1000", "--seed", "2"]),
    );
    run_ok(
        bin()
            .args(["authority", "fix"])
            .arg("--db")
            .arg(&db)
            .args(["--core", "core_b"]),
    );
    let shown = stdout(&run_ok(
        bin().args(["authority", "show"]).arg("--db").arg(&db),
    ));
    assert!(
        shown.contains("core=core_b vendor=initech score=0 status=safe"),
        "{shown}"
    );
}
