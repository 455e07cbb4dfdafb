//! End-to-end tests of the command-line binary: flag handling, exit codes,
//! and the files it writes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmb::{BirthSite, Region, Scenario, SensorSpec};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lmb-runner"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("failed to launch the runner binary")
}

/// A fast two-sensor scenario: five steps, one birth site, light clutter.
fn tiny_scenario(dir: &Path) -> PathBuf {
    let scenario = Scenario {
        duration: 5,
        dt: 1.0,
        process_intensity: 0.1,
        survival: 0.95,
        seed: 9,
        fixed_cardinality: None,
        region: Region { min: [-100.0, -100.0], max: [100.0, 100.0] },
        birth: vec![BirthSite {
            existence: 0.05,
            mean: [0.0, 0.0, 0.0, 0.0],
            std: [10.0, 10.0, 10.0, 10.0],
        }],
        sensors: vec![
            SensorSpec { detection: 0.9, clutter_rate: 2.0, noise_std: 1.0 },
            SensorSpec { detection: 0.8, clutter_rate: 2.0, noise_std: 2.0 },
        ],
    };
    let path = dir.join("tiny.toml");
    scenario.save(&path).unwrap();
    path
}

#[test]
fn tracking_run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let out = dir.path().join("results.csv");
    let output = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--filter",
        "pu",
        "--runs",
        "3",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,true_card,est_card,ospa_e,ospa_h");
    assert_eq!(lines.len(), 1 + 5, "expected one row per time step");

    let summary = std::fs::read_to_string(dir.path().join("results.summary")).unwrap();
    assert!(summary.contains("filter = pu"));
    assert!(summary.contains("runs = 3"));

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("filter=Pu"), "stdout should echo the summary line: {stdout}");
}

#[test]
fn all_three_filters_run_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    for filter in ["pu", "ga", "ic"] {
        let out = dir.path().join(format!("{filter}.csv"));
        let output = run(&[
            "--scenario",
            scenario.to_str().unwrap(),
            "--filter",
            filter,
            "--runs",
            "2",
            "--seed",
            "0",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "{filter} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(out.exists(), "{filter} wrote no results file");
    }
}

#[test]
fn bench_mode_writes_the_scaling_table() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let out = dir.path().join("scaling.csv");
    let output = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--filter",
        "ic",
        "--runs",
        "2",
        "--seed",
        "0",
        "--bench-sensors",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sensors,mean_step_seconds");
    assert_eq!(lines.len(), 3, "one row per requested sensor count");
}

#[test]
fn missing_scenario_file_fails_with_a_message() {
    let output = run(&["--scenario", "/definitely/not/here.toml", "--filter", "pu"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(!stderr.trim().is_empty(), "a config error must explain itself");
}

#[test]
fn unknown_filter_name_is_rejected() {
    let output = run(&["--scenario", "x.toml", "--filter", "mgs"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--filter"), "clap should name the offending flag: {stderr}");
}

#[test]
fn invalid_numeric_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let scenario = scenario.to_str().unwrap();

    let zero_runs = run(&["--scenario", scenario, "--filter", "pu", "--runs", "0"]);
    assert!(!zero_runs.status.success(), "runs = 0 must fail");

    let bad_prune = run(&["--scenario", scenario, "--filter", "pu", "--prune", "1.5"]);
    assert!(!bad_prune.status.success(), "prune = 1.5 must fail");

    let bad_bench = run(&[
        "--scenario",
        scenario,
        "--filter",
        "pu",
        "--bench-sensors",
        "0,2",
    ]);
    assert!(!bad_bench.status.success(), "a zero sensor count must fail");
}
