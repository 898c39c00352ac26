use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weylcap")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const DEMO: &str = r#"{"alpha": 4, "beta": 4, "rho": 1.5, "T": 6, "W": 3, "eta2": 0.1, "P_total": 1, "phase_seed": 3}"#;

#[test]
fn signaling_reports_an_orthonormal_window() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sig.json", r#"{"rho": 1.5, "s": 1}"#);
    let out_dir = tmp.path().join("out");
    let out = run(&["signaling", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(&out_dir);
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["command"], "signaling");
    assert!(s["gram_max_dev"].as_f64().unwrap() <= 1e-6);
    assert_eq!(s["units"]["decay.time.rate"], "1/seconds");
    let csv = fs::read_to_string(out_dir.join("window.csv")).unwrap();
    assert!(csv.starts_with("index,time,re,im"));
}

#[test]
fn signaling_rejects_the_balian_low_regime() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sig.json", r#"{"rho": 0.9}"#);
    let out = run(&[
        "signaling",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Balian–Low regime"), "{}", stderr(&out));
}

#[test]
fn wider_window_decays_four_times_slower_in_time() {
    let tmp = TempDir::new().unwrap();
    let mut rates = Vec::new();
    for s in [1, 4] {
        let cfg = write_config(
            tmp.path(),
            &format!("s{s}.json"),
            &format!(r#"{{"rho": 1.5, "s": {s}}}"#),
        );
        let dir = tmp.path().join(format!("o{s}"));
        let out = run(&["signaling", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        rates.push(summary(&dir)["decay"]["time"]["rate"].as_f64().unwrap());
    }
    let ratio = rates[1] / rates[0];
    assert!((ratio - 0.25).abs() < 0.03, "ratio {ratio}");
}

#[test]
fn capacity_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cap.json", DEMO);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&["capacity", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["summary.json", "atoms.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    assert!(run(&[
        "capacity",
        "--config",
        &cfg,
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "4"
    ])
    .status
    .success());
    assert_ne!(
        fs::read(a.join("summary.json")).unwrap(),
        fs::read(c.join("summary.json")).unwrap()
    );
}

#[test]
fn demo_capacity_gap_is_within_the_reported_bound() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cap.json", DEMO);
    let dir = tmp.path().join("o");
    let out = run(&["capacity", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("csir_exact="));
    let r = &summary(&dir)["report"];
    let gap = (r["csir_exact"].as_f64().unwrap() - r["csir_symbol"].as_f64().unwrap()).abs();
    assert!(gap <= r["error_bound_csir"].as_f64().unwrap());
    let csv = fs::read_to_string(dir.join("atoms.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "k,l,lambda,S_plus,P_exact,P_symbol");
    assert_eq!(csv.lines().count(), r["lattice"].as_array().unwrap().len() + 1);
}

#[test]
fn identity_channel_capacities_coincide() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "id.toml",
        "alpha = 2.0\nbeta = 3.0\nrho = 1.5\nT = 4.5\nW = 1.0\neta2 = 0.1\nchannel_kind = \"identity\"\n",
    );
    let dir = tmp.path().join("o");
    let out = run(&["capacity", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = &summary(&dir)["report"];
    let (e, s) = (r["csir_exact"].as_f64().unwrap(), r["csir_symbol"].as_f64().unwrap());
    assert!((e - s).abs() <= 1e-9 * s, "{e} vs {s}");
}

#[test]
fn outputs_are_not_clobbered_without_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sig.json", r#"{"rho": 1.5}"#);
    let dir = tmp.path().join("o");
    let args = ["signaling", "--config", &cfg, "--out", dir.to_str().unwrap()];
    assert!(run(&args).status.success());
    fs::write(dir.join("summary.json"), "sentinel").unwrap();
    let again = run(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));
    assert_eq!(fs::read_to_string(dir.join("summary.json")).unwrap(), "sentinel");
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(run(&forced).status.success());
    assert_ne!(fs::read_to_string(dir.join("summary.json")).unwrap(), "sentinel");
}

#[test]
fn config_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let out_dir = out_dir.to_str().unwrap();
    let unknown = write_config(tmp.path(), "u.json", r#"{"rho": 1.5, "sigma": 2}"#);
    let out = run(&["signaling", "--config", &unknown, "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"));
    let negative = write_config(tmp.path(), "n.json", &DEMO.replace("\"eta2\": 0.1", "\"eta2\": -1"));
    let out = run(&["capacity", "--config", &negative, "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`eta2`"), "{}", stderr(&out));
    let missing = tmp.path().join("absent.json");
    let out = run(&["capacity", "--config", missing.to_str().unwrap(), "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lti_sweep_gap_shrinks_and_power_is_conserved() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sw.json",
        r#"{"alpha": 2, "beta_seq": [4, 8, 16], "W": 1, "rho": 1.5, "eta2": 0.1, "mode": "csit", "P_total": 1}"#,
    );
    let dir = tmp.path().join("o");
    let out = run(&["lti-sweep", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[1][3] < w[0][3]), "{csv}");
    assert!(rows.iter().all(|r| (r[4] - 1.0).abs() <= 1e-9));
    assert_eq!(summary(&dir)["mode"], "csit");
}

#[test]
fn single_element_sweep_has_one_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sw.json",
        r#"{"alpha": 2, "beta_seq": [8], "W": 1, "rho": 1.5, "eta2": 0.1}"#,
    );
    let dir = tmp.path().join("o");
    assert!(run(&["lti-sweep", "--config", &cfg, "--out", dir.to_str().unwrap()])
        .status
        .success());
    assert_eq!(fs::read_to_string(dir.join("sweep.csv")).unwrap().lines().count(), 2);
}

#[test]
fn sweep_truncation_needs_explicit_consent() {
    let tmp = TempDir::new().unwrap();
    let base = r#""alpha": 2, "beta_seq": [4, 8, 16], "W": 1, "rho": 1.5, "eta2": 0.1, "max_atoms": 8"#;
    let strict = write_config(tmp.path(), "a.json", &format!("{{{base}}}"));
    let out = run(&[
        "lti-sweep",
        "--config",
        &strict,
        "--out",
        tmp.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("allow_truncation"));
    let lenient = write_config(tmp.path(), "b.json", &format!("{{{base}, \"allow_truncation\": true}}"));
    let dir = tmp.path().join("b");
    let out = run(&["lti-sweep", "--config", &lenient, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(&dir);
    assert!(s["rows"].as_array().unwrap().len() < 3);
    assert!(!s["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn validate_passes_every_check_by_default() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("v");
    let out = run(&["validate", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let s = summary(&dir);
    assert_eq!(s["passed"], true);
    assert_eq!(
        s["checks"].as_array().unwrap().len(),
        weylcap::validation::CHECK_NAMES.len()
    );
}

#[test]
fn validate_filter_and_fault_hook() {
    let empty = run(&["validate", "--checks", ""]);
    assert_eq!(empty.status.code(), Some(0));
    assert!(stderr(&empty).contains("no checks selected"));
    let fault = run(&["validate", "--checks", "symbol_real", "--inject-fault"]);
    assert_eq!(fault.status.code(), Some(1));
    assert!(stdout(&fault).contains("FAIL symbol_real"));
    let unknown = run(&["validate", "--checks", "nonexistent"]);
    assert_eq!(unknown.status.code(), Some(2));
}
