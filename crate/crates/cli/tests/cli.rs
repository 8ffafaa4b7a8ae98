use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const FAST: &str = "[grid]\nn_panels = 120\n[certificates]\nprobe_trials = 2\nprobe_refine = false\n";

fn hammerstein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hammerstein")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_in(dir: &TempDir, sub: &str, config: &str, out: &str, extra: &[&str]) -> Output {
    let out_dir = dir.path().join(out);
    let mut args = vec![sub, "--config", config, "--out-dir", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    hammerstein(&args)
}

#[test]
fn catalog_config_succeeds_with_two_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "[kernel]\nfamily = \"C\"\nepsilon = 0.5\n[nonlinearity]\nfamily = \"I\"\nalpha = 0.5\n");
    let out = run_in(&dir, "solve", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["status"]["exit_code"], 0);
    assert_eq!(report["tool"]["name"], "hammerstein");
    assert!(report["solve"]["sup_diffs"].as_array().unwrap().len() > 2);
    assert!(report["certificates"]["passed"].as_bool().unwrap());
    let profile = fs::read_to_string(dir.path().join("out/profile.csv")).unwrap();
    assert_eq!(profile.lines().next().unwrap(), "x,f_star,gamma,eta_minus_fstar");
    assert_eq!(profile.lines().count(), 1601);
}

#[test]
fn alpha_out_of_range_exits_2_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[nonlinearity]\nfamily = \"I\"\nalpha = 1.2\n");
    let out = run_in(&dir, "solve", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonlinearity.alpha"));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[kernel\nfamily = \"C\"\n");
    assert_eq!(run_in(&dir, "check", &cfg, "out", &[]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "typo.toml", "[kernel]\nfamly = \"C\"\n");
    let out = run_in(&dir, "check", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel.famly"));
}

#[test]
fn near_degenerate_delta_exits_3_with_report() {
    let dir = TempDir::new().unwrap();
    let text = format!("{FAST}[kernel]\nfamily = \"B\"\ndelta = 0.999999\n");
    let cfg = write_config(dir.path(), "b.toml", &text);
    let out = run_in(&dir, "solve", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["conditions"]["positivity_ok"], false);
    assert!(!dir.path().join("out/profile.csv").exists());
}

#[test]
fn iteration_budget_exhaustion_exits_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "short.toml", &format!("{FAST}[solver]\nmax_iter = 4\n"));
    let out = run_in(&dir, "solve", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["solve"]["iterations"], 4);
    assert_eq!(report["solve"]["converged"], false);
}

#[test]
fn reports_are_deterministic_and_echo_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FAST);
    for out in ["a", "b"] {
        let o = run_in(&dir, "solve", &cfg, out, &["--seed", "17", "--threads", "1"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/report.json")).unwrap();
    let b = fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(dir.path().join("a/profile.csv")).unwrap(),
        fs::read(dir.path().join("b/profile.csv")).unwrap()
    );

    // re-run from the echoed configuration inside the report
    let echo = dir.path().join("a/report.json");
    let o = run_in(&dir, "solve", echo.to_str().unwrap(), "c", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(a, fs::read(dir.path().join("c/report.json")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["config"]["certificates"]["seed"], 17);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/run-meta.json")).unwrap()).unwrap();
    assert!(meta["started_unix_seconds"].as_u64().is_some());
}

#[test]
fn table_reemits_convergence_history() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FAST);
    assert_eq!(run_in(&dir, "solve", &cfg, "out", &[]).status.code(), Some(0));
    let report = dir.path().join("out/report.json");
    let out = hammerstein(&["table", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,sup_diff,envelope,ratio"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 2);
    assert_eq!(rows[0][2], "");
    for r in &rows[1..] {
        assert!(r[3].parse::<f64>().unwrap() <= 1.0);
    }

    let missing = hammerstein(&["table", "--report", dir.path().join("nope.json").to_str().unwrap()]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn check_writes_report_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FAST);
    let out = run_in(&dir, "check", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out/report.json").exists());
    assert!(!dir.path().join("out/profile.csv").exists());
}

#[test]
fn nemytsky_pipeline_adds_envelope_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "n.toml", &format!("{FAST}[nemytsky]\ng0 = \"g1\"\ng1 = \"g3\"\nxi = 0.25\n"));
    let out = run_in(&dir, "solve-nemytsky", &cfg, "out", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let profile = fs::read_to_string(dir.path().join("out/profile.csv")).unwrap();
    let mut lines = profile.lines();
    assert_eq!(lines.next(), Some("x,f_star,gamma,eta_minus_fstar,phi,lower_env,upper_env"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[5] <= v[4] + 1e-10 && v[4] <= v[6] + 1e-10);
    }
    let plain = write_config(dir.path(), "plain.toml", FAST);
    assert_eq!(run_in(&dir, "solve-nemytsky", &plain, "out2", &[]).status.code(), Some(2));
}
