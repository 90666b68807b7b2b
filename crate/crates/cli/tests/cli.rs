//! The `hsr` binary driven as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hsr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = hsr(dir, args);
    assert!(
        out.status.success(),
        "hsr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Exit code plus the parsed one-line JSON error.
fn fails(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = hsr(dir, args);
    assert!(!out.status.success(), "hsr {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().expect("an error line");
    let v: Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {stderr}"));
    let code = out.status.code().unwrap();
    assert_eq!(v["exit_code"].as_i64(), Some(code as i64));
    (code, v)
}

const TINY_CONFIG: &str = r#"{
  "hsrnet": {"stages": 2, "irn_features": 8, "ssn_features_wide": 8, "ssn_features_narrow": 4, "cam_reduction": 4},
  "train": {"lr": 0.001, "batch_size": 2, "max_steps": 20, "patch_size": 16, "seed": 1, "eval_every": 10},
  "data": {"hsi": ["s0.hsrc", "s1.hsrc", "s2.hsrc"], "split": 0.34},
  "srf": {"path": "srf.csv"}
}"#;

/// Synthesizes three scenes and the SRF, simulates the MSI of the third and trains.
fn pipeline(dir: &Path) {
    for seed in 0..3 {
        let out = format!("s{seed}.hsrc");
        let seed = seed.to_string();
        let mut args = vec!["synth", "--seed", &seed, "--width", "32", "--height", "32", "--channels", "16", "--out", &out];
        if seed == "0" {
            args.extend(["--srf-out", "srf.csv"]);
        }
        ok(dir, &args);
    }
    ok(dir, &["simulate", "--hsi", "s2.hsrc", "--srf", "srf.csv", "--out", "m2.hsrc"]);
    fs::write(dir.join("run.json"), TINY_CONFIG).unwrap();
    ok(dir, &["train", "--config", "run.json", "--out", "model.ckpt"]);
    ok(dir, &["infer", "--model", "model.ckpt", "--msi", "m2.hsrc", "--srf", "srf.csv", "--out", "x2.hsrc"]);
}

#[test]
fn full_pipeline_produces_a_scored_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let history = fs::read_to_string(d.join("model.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 21);
    ok(d, &["eval", "--ref", "s2.hsrc", "--test", "x2.hsrc", "--json", "report.json"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    for key in ["cc", "psnr_db", "ssim", "sam_degrees"] {
        assert!(report[key].as_f64().unwrap().is_finite(), "{key}");
    }
    let printed = ok(d, &["eval", "--ref", "s2.hsrc", "--test", "x2.hsrc"]);
    let again: Value = serde_json::from_slice(&printed.stdout).unwrap();
    assert_eq!(again, report);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for f in ["s0.hsrc", "srf.csv", "m2.hsrc", "model.ckpt", "model.history.csv", "x2.hsrc"] {
        let (x, y) = (fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn scoring_a_cube_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--width", "16", "--height", "16", "--channels", "8", "--out", "a.hsrc"]);
    let out = ok(d, &["eval", "--ref", "a.hsrc", "--test", "a.hsrc"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["cc"].as_f64(), Some(1.0));
    assert_eq!(r["psnr_db"].as_f64(), Some(100.0));
    assert_eq!(r["ssim"].as_f64(), Some(1.0));
    assert_eq!(r["sam_degrees"].as_f64(), Some(0.0));
}

#[test]
fn hqs_writes_cube_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--width", "8", "--height", "8", "--channels", "16", "--out", "h.hsrc", "--srf-out", "srf.csv"]);
    ok(d, &["simulate", "--hsi", "h.hsrc", "--srf", "srf.csv", "--out", "m.hsrc"]);
    ok(
        d,
        &["hqs", "--msi", "m.hsrc", "--srf", "srf.csv", "--epsilon", "0.1", "--iters", "25", "--hs-bands", "16", "--out", "r.hsrc"],
    );
    let trace = fs::read_to_string(d.join("r.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iter,fidelity,update_norm"));
    let fidelity: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!fidelity.is_empty() && fidelity.len() <= 25);
    assert!(fidelity.windows(2).all(|w| w[1] <= w[0]));
    assert!(d.join("r.hsrc").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--width", "8", "--height", "8", "--channels", "16", "--out", "h.hsrc", "--srf-out", "srf.csv"]);

    // usage
    let (code, v) = fails(d, &["simulate", "--hsi", "h.hsrc"]);
    assert_eq!((code, v["error"].as_str()), (2, Some("usage")));
    assert_eq!(fails(d, &["frobnicate"]).0, 2);

    // missing file
    let (code, v) = fails(d, &["eval", "--ref", "nope.hsrc", "--test", "h.hsrc"]);
    assert_eq!((code, v["error"].as_str()), (1, Some("io")));
    assert!(v["message"].as_str().unwrap().contains("nope.hsrc"));

    // corrupt cube, checkpoint and SRF
    let mut bytes = fs::read(d.join("h.hsrc")).unwrap();
    bytes.truncate(bytes.len() - 5);
    fs::write(d.join("cut.hsrc"), &bytes).unwrap();
    assert_eq!(fails(d, &["eval", "--ref", "cut.hsrc", "--test", "h.hsrc"]).0, 3);
    fs::write(d.join("bad.ckpt"), b"garbage").unwrap();
    assert_eq!(fails(d, &["infer", "--model", "bad.ckpt", "--msi", "h.hsrc", "--srf", "srf.csv", "--out", "o.hsrc"]).0, 3);
    fs::write(d.join("bad.csv"), "wavelength_nm,b0\n400,x\n").unwrap();
    assert_eq!(fails(d, &["simulate", "--hsi", "h.hsrc", "--srf", "bad.csv", "--out", "o.hsrc"]).0, 3);

    // mismatched cubes
    ok(d, &["synth", "--width", "4", "--height", "8", "--channels", "16", "--out", "small.hsrc"]);
    assert_eq!(fails(d, &["eval", "--ref", "small.hsrc", "--test", "h.hsrc"]).0, 3);

    // configuration
    fs::write(d.join("bad.json"), r#"{"srf": {"path": "srf.csv"}}"#).unwrap();
    let (code, v) = fails(d, &["train", "--config", "bad.json", "--out", "m.ckpt"]);
    assert_eq!((code, v["error"].as_str()), (2, Some("config")));
    ok(d, &["simulate", "--hsi", "h.hsrc", "--srf", "srf.csv", "--out", "m.hsrc"]);
    let unstable = ["hqs", "--msi", "m.hsrc", "--srf", "srf.csv", "--epsilon", "100", "--hs-bands", "16", "--out", "r.hsrc"];
    assert_eq!(fails(d, &unstable).0, 2);
}

#[test]
fn divergence_exits_4_and_keeps_the_history() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--width", "8", "--height", "8", "--channels", "8", "--out", "h.hsrc", "--srf-out", "srf.csv"]);
    let cfg = r#"{
      "hsrnet": {"stages": 1, "irn_features": 4, "ssn_features_wide": 4, "ssn_features_narrow": 2},
      "train": {"lr": 1e30, "batch_size": 1, "max_steps": 50, "patch_size": 8},
      "data": {"hsi": ["h.hsrc"]},
      "srf": {"path": "srf.csv"}
    }"#;
    fs::write(d.join("run.json"), cfg).unwrap();
    let (code, v) = fails(d, &["train", "--config", "run.json", "--out", "m.ckpt"]);
    assert_eq!((code, v["error"].as_str()), (4, Some("divergence")));
    assert!(d.join("m.history.csv").exists());
    assert!(!d.join("m.ckpt").exists());
}

#[test]
fn unknown_config_keys_only_warn() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--width", "8", "--height", "8", "--channels", "8", "--out", "h.hsrc", "--srf-out", "srf.csv"]);
    let cfg = r#"{
      "hsrnet": {"stages": 1, "irn_features": 4, "ssn_features_wide": 4, "ssn_features_narrow": 2},
      "train": {"batch_size": 1, "max_steps": 2, "patch_size": 8, "momentum": 0.9},
      "data": {"hsi": ["h.hsrc"]},
      "srf": {"path": "srf.csv"}
    }"#;
    fs::write(d.join("run.json"), cfg).unwrap();
    let out = ok(d, &["train", "--config", "run.json", "--out", "m.ckpt"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.momentum"));
    assert!(d.join("m.ckpt").exists());
}

#[test]
fn help_goes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["simulate", "synth", "train", "infer", "eval", "hqs", "gradcheck"] {
        assert!(text.contains(sub), "{sub}");
    }
}
