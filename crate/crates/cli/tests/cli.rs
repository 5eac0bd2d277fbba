use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dimercool"))
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dimercool-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn selftest_passes() {
    let out = run(bin().arg("selftest"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7);
}

#[test]
fn config_errors_exit_with_one() {
    let bad = scratch("typo.cfg", "nbar = 0.1\nnbarr = 3\n");
    let out = run(bin().args(["sweep", "--config"]).arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(run(bin().args(["sweep", "--nmax", "zero"])).status.code(), Some(1));
    assert_eq!(run(bin().arg("frobnicate")).status.code(), Some(1));
}

#[test]
fn csv_is_byte_identical_across_job_counts() {
    let cfg = scratch("small.cfg", "nbar = 0.5\nstart = 0.02\nstop = 0.2\npoints = 5\nn_max = 30\nwith_and_without_g = true\n");
    let one = run(bin().args(["sweep", "--jobs", "1", "--config"]).arg(&cfg));
    let two = run(bin().args(["sweep", "--jobs", "3", "--config"]).arg(&cfg));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, two.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().nth(2).unwrap().ends_with("ok;g0"));
}

#[test]
fn solver_failures_exit_with_two_but_still_write_rows() {
    let cfg = scratch("cap.cfg", "nbar = 20\nstart = 0.05\nstop = 0.1\npoints = 2\nn_max = auto\nn_max_cap = 20\n");
    let out_path = cfg.with_extension("csv");
    let out = run(bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&out_path));
    assert_eq!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("error"));
}

#[test]
fn validation_exit_codes() {
    let good = scratch("val.cfg", "nbar = 0.1\nn_max = 10\nstart = 0.005\nstop = 0.05\npoints = 3\n");
    let out = run(bin().args(["validate", "--config"]).arg(&good));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let strict = scratch("strict.cfg", "nbar = 0.1\nn_max = 10\nstart = 0.005\nstop = 0.05\npoints = 3\nvalidation_threshold = 1e-14\n");
    assert_eq!(run(bin().args(["validate", "--config"]).arg(&strict)).status.code(), Some(3));
    let hot = scratch("hot.cfg", "nbar = 5\nn_max = 10\npoints = 2\n");
    assert_eq!(run(bin().args(["validate", "--config"]).arg(&hot)).status.code(), Some(1));
}

#[test]
fn point_reports_observables_and_transient() {
    let cfg = scratch("point.cfg", "nbar = 0.5\nn_max = 30\n");
    let out = run(bin().args(["point", "--format", "json", "--at", "0.085", "--transient", "200", "--samples", "4", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["sweep_value"], 0.085);
    assert_eq!(doc["transient"].as_array().unwrap().len(), 4);
    assert!(doc["row"]["concurrence"].as_f64().unwrap() >= 0.0);
    let csv = run(bin().args(["point", "--at", "0.085", "--config"]).arg(&cfg));
    assert_eq!(csv.status.code(), Some(0));
    assert_eq!(String::from_utf8(csv.stdout).unwrap().lines().count(), 2);
}
