use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
name = "small"
model = "exponential_overid"
n = 200
theta_star = [2.0]
seed = 7

[grid]
m = 200
pad = 1.0
density = "exp_neg"

[transform]
kind = "cdf"
regularization = "always"
t = { m = 60, density = "lebesgue" }

[prior]
basis = "cosine"
j_total = 40
eigen = { kind = "polynomial", alpha = 1.7 }
sigma0 = 100.0
mean = { kind = "two_step", alpha = 0.1 }
theta_bounds = [[1.0, 3.0]]

[posterior]
path = "svd"

[mcmc]
total = 600
burn_in = 200
proposal = { kind = "chi_squared_ceil" }
init = [1.0]
"#;

fn gpmoment(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmoment")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gpmoment(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    stderr.lines().find(|l| l.starts_with("error: ")).unwrap_or_default().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"), tmp.path().join("c.csv"));
    let base = ["simulate", "--model", "exponential_overid", "--n", "50", "--theta-star", "2", "--out"];
    for (path, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let mut args = base.to_vec();
        args.extend([s(path), "--seed", seed]);
        ok(&args);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_ne!(text, fs::read_to_string(&c).unwrap());
    assert_eq!(text.lines().next(), Some("x"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn estimate_outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["estimate", "--config", &config, "--out", s(dir)]);
    }
    for file in ["result.json", "density.csv", "chain.csv"] {
        let left = fs::read(a.join(file)).unwrap();
        assert!(!left.is_empty(), "{file}");
        assert_eq!(left, fs::read(b.join(file)).unwrap(), "{file}");
    }
    let result: serde_json::Value = serde_json::from_slice(&fs::read(a.join("result.json")).unwrap()).unwrap();
    let mean = result["posterior_mean"].as_f64().unwrap();
    assert!((1.0..=3.0).contains(&mean), "{mean}");
    assert!(result.get("runtime_s").is_none());
    assert_eq!(fs::read_to_string(a.join("chain.csv")).unwrap().lines().count(), 401);
}

#[test]
fn estimate_accepts_external_data_and_overrides() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let data = tmp.path().join("data.csv");
    ok(&["simulate", "--config", &config, "--out", s(&data)]);
    let (from_file, simulated, timed) = (tmp.path().join("f"), tmp.path().join("s"), tmp.path().join("t"));
    ok(&["estimate", "--config", &config, "--data", s(&data), "--out", s(&from_file)]);
    ok(&["estimate", "--config", &config, "--out", s(&simulated)]);
    // The config seed drives both the simulated sample and the chain.
    assert_eq!(fs::read(from_file.join("result.json")).unwrap(), fs::read(simulated.join("result.json")).unwrap());
    ok(&["estimate", "--config", &config, "--out", s(&timed), "--timing", "--path", "basis", "--m-grid", "150"]);
    let text = fs::read_to_string(timed.join("result.json")).unwrap();
    assert!(text.contains("runtime_s") && text.contains("\"basis\""), "{text}");
}

#[test]
fn scan_writes_one_row_per_point() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("scan.csv");
    ok(&["scan", "--config", &config, "--points", "11", "--path", "cu_gmm", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "theta,logpost,path");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("1,") || lines[1].starts_with("1.0,"), "{}", lines[1]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",cu_gmm")));
}

#[test]
fn reproduce_exp1_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["reproduce", "exp1", "--out", s(dir), "--m-grid", "300"]);
    }
    for file in ["config.toml", "result.json", "density.csv"] {
        assert_eq!(fs::read(a.join("exp1").join(file)).unwrap(), fs::read(b.join("exp1").join(file)).unwrap(), "{file}");
    }
    assert!(!a.join("exp1").join("chain.csv").exists());
}

#[test]
fn errors_name_the_failing_stage() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("m = 200", "m = 20")).unwrap();
    let err = error_line(&gpmoment(&["estimate", "--config", s(&bad), "--out", s(tmp.path())]));
    assert!(err.starts_with("error: config:"), "{err}");

    let err = error_line(&gpmoment(&["reproduce", "exp9", "--out", s(tmp.path())]));
    assert!(err.contains("exp9"), "{err}");

    let err = error_line(&gpmoment(&["simulate", "--model", "exponential_overid", "--n", "0", "--theta-star", "2"]));
    assert!(err.starts_with("error: simulate:"), "{err}");

    let missing = tmp.path().join("missing.csv");
    let config = small_config(tmp.path());
    let err = error_line(&gpmoment(&["estimate", "--config", &config, "--data", s(&missing)]));
    assert!(err.starts_with("error: data:"), "{err}");
}
