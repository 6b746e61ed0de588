use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ilbk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilbk"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_value(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn rejects_eps_outside_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = ilbk(dir.path(), &["--set", "eps=1.2", "validate"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("eps must lie in (0,1]"), "stderr: {err}");
}

#[test]
fn rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = ilbk(dir.path(), &["--set", "bogus=3", "validate"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("bogus"), "stderr should name the unknown key: {err}");
}

#[test]
fn minimal_config_file_fills_grid_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"m": 1.0, "m1": 1.0, "eps": 0.5, "theta1": 1.0}"#).unwrap();
    let out = ilbk(dir.path(), &["--config", cfg.to_str().unwrap(), "validate"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let echo = read_value(&dir.path().join("effective_config.json"));
    assert_eq!(echo["config"]["grid"]["n"].as_u64(), Some(24));
    assert_eq!(echo["config"]["grid"]["l"].as_f64(), Some(6.0));
    assert_eq!(echo["config"]["grid"]["nr"].as_u64(), Some(256));
}

#[test]
fn sigma_requires_calibration_first() {
    let dir = tempfile::tempdir().unwrap();
    let out = ilbk(dir.path(), &["sigma"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("run `ilbk calibrate` first"));

    assert!(ilbk(dir.path(), &["calibrate"]).status.success());
    let out = ilbk(dir.path(), &["sigma"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    // every artifact is pinned to the same effective-config hash
    let csv = fs::read_to_string(dir.path().join("sigma.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="), "csv head: {}", &csv[..40]);
    let sigma = read_value(&dir.path().join("sigma.json"));
    let calibration = read_value(&dir.path().join("calibration.json"));
    assert_eq!(sigma["config_hash"], calibration["config_hash"]);
}

#[test]
fn identical_configs_produce_bit_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        for cmd in ["calibrate", "sigma", "evolve"] {
            let args =
                ["--threads", threads, "--set", "grid.nr=96", "--seed", "11", cmd];
            let r = ilbk(out, &args);
            assert!(r.status.success(), "{cmd} failed: {}", stderr_of(&r));
        }
    }
    for name in ["calibration.json", "sigma.csv", "trace.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}

#[test]
fn operator_cache_version_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["--set", "grid.nr=64"];
    let run = |cmd: &str| {
        let mut args = sets.to_vec();
        args.push(cmd);
        ilbk(dir.path(), &args)
    };
    assert!(run("calibrate").status.success());
    assert!(run("spectrum").status.success());

    let cache = dir.path().join("op_radial_64.ilbk");
    let mut bytes = fs::read(&cache).unwrap();
    bytes[5..9].copy_from_slice(&9u32.to_le_bytes());
    fs::write(&cache, bytes).unwrap();

    let out = run("spectrum");
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("version 9 unsupported"), "stderr: {err}");
}

#[test]
fn pipeline_report_cross_checks_rate_against_gap() {
    let dir = tempfile::tempdir().unwrap();
    let run = |cmd: &str| ilbk(dir.path(), &["--set", "grid.nr=96", cmd]);
    for cmd in ["validate", "calibrate", "spectrum", "evolve"] {
        let r = run(cmd);
        assert!(r.status.success(), "{cmd} failed: {}", stderr_of(&r));
    }
    let out = run("report");
    assert!(out.status.success(), "report failed: {}", stderr_of(&out));

    let report = read_value(&dir.path().join("report.json"));
    let rows = report["rows"].as_array().unwrap();
    let rate_row = rows
        .iter()
        .find(|r| r["check"] == "fitted_rate_vs_spectral_gap")
        .expect("report should compare the fitted rate against the gap");
    assert_eq!(rate_row["pass"], true);
    assert!(rate_row["value"].as_f64().unwrap() <= 0.1);
    assert_eq!(report["checks_total"], report["checks_passed"]);
}

#[test]
fn report_refuses_artifacts_from_different_configs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ilbk(dir.path(), &["validate"]).status.success());
    assert!(ilbk(dir.path(), &["--set", "grid.nr=128", "calibrate"]).status.success());
    let out = ilbk(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("refusing to mix"), "stderr: {err}");
}

#[test]
fn transport_demo_runs_on_a_small_slab() {
    let dir = tempfile::tempdir().unwrap();
    let sets = [
        "--set",
        "transport.n=8",
        "--set",
        "transport.nx=8",
        "--set",
        "transport.steps=40",
    ];
    let run = |cmd: &str| {
        let mut args = sets.to_vec();
        args.push(cmd);
        ilbk(dir.path(), &args)
    };
    assert!(run("calibrate").status.success());
    let out = run("transport-demo");
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let csv = fs::read_to_string(dir.path().join("transport.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "step,mass");
    // hash comment + header + initial mass + one row per step
    assert_eq!(lines.len(), 2 + 41);
}
