use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use pexcite::excitation::{build_gram_sweep, directional_pe_test, matrix_pe_test, PEVerdict};
use pexcite::signal::{pulse_train_pair, read_csv, sample_sinusoid_mix, TimeGrid};
use serde_json::Value;

fn pexcite(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pexcite"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn verdict(v: &Value) -> PEVerdict {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn generate_pathological_pulse_train() {
    let dir = tempfile::tempdir().unwrap();
    let out = pexcite(dir.path(), &["generate", "--kind", "pathological", "--horizon", "126", "--dt", "0.001"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let w = read_csv(fs::File::open(dir.path().join("signal.csv")).unwrap()).unwrap();
    assert_eq!(w.dim(), 2);
    assert_eq!(w.len(), 126_001);
    let expected = pulse_train_pair(TimeGrid::covering(0.0, 126.0, 0.001).unwrap()).unwrap();
    assert_eq!(w.values(), expected.values());
    // every sample is one of the two unit axes
    assert!(w.values().column_iter().all(|c| c[0] + c[1] == 1.0 && c[0] * c[1] == 0.0));
    // intervals k = 1..6 end at 2^7 − 2 = 126
    let at = |t: f64| w.value_at(t).unwrap()[0];
    for (t, gamma) in [(1.0, 1.0), (3.0, 0.0), (10.0, 1.0), (20.0, 0.0), (40.0, 1.0), (100.0, 0.0)] {
        assert_eq!(at(t), gamma, "t = {t}");
    }
    assert!(dir.path().join("generate.manifest.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pexcite(dir.path(), &["generate", "--kind", "bogus", "--horizon", "10"]);
    assert_eq!(code(&out), 2);

    fs::write(dir.path().join("cfg.json"), r#"{"kind": "bogus", "horizon": 10}"#).unwrap();
    assert_eq!(code(&pexcite(dir.path(), &["generate", "--config", "cfg.json"])), 2);

    fs::write(dir.path().join("typo.json"), r#"{"kind": "zero", "horizon": 10, "horizn": 3}"#).unwrap();
    assert_eq!(code(&pexcite(dir.path(), &["generate", "--config", "typo.json"])), 2);

    assert_eq!(code(&pexcite(dir.path(), &["analyze", "--T", "1", "--beta", "1"])), 2);

    fs::write(dir.path().join("bad.csv"), "t,w1\n0,1\n0.1,abc\n0.2,1\n").unwrap();
    let out = pexcite(dir.path(), &["analyze", "--signal", "bad.csv", "--T", "0.1", "--beta", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = pexcite(dir.path(), &["generate", "--kind", "zero", "--horizon", "1", "--dt", "0.1"]);
    assert_eq!(code(&out), 0);
    let out = pexcite(dir.path(), &["analyze", "--signal", "signal.csv", "--T", "5", "--beta", "1"]);
    assert_eq!(code(&out), 2, "window longer than the signal");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"kind": "constant", "horizon": 10, "dt": 0.5, "value": [2]}"#).unwrap();
    let out = pexcite(dir.path(), &["generate", "--config", "cfg.json", "--horizon", "2"]);
    assert_eq!(code(&out), 0);
    let w = read_csv(fs::File::open(dir.path().join("signal.csv")).unwrap()).unwrap();
    assert_eq!(w.len(), 5);
    assert!(w.values().iter().all(|&v| v == 2.0));
    let m = json(&dir.path().join("generate.manifest.json"));
    assert_eq!(m["config"]["horizon"], 2.0);
    assert_eq!(m["config"]["dt"], 0.5);
}

/// The verdicts in `analyze.json` equal the library's on the same samples, bit for bit.
#[test]
fn generate_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TimeGrid::covering(0.0, 30.0, 0.01).unwrap();
    let sincos = sample_sinusoid_mix(
        &[1.0, 1.0],
        &[1.0, 1.0],
        &[0.0, std::f64::consts::FRAC_PI_2],
        &DMatrix::identity(2, 2),
        grid,
    )
    .unwrap();
    let pulse = pulse_train_pair(grid).unwrap();
    for (kind, w, window, beta, expect) in [
        ("sinusoid", sincos, 6.3, 0.1, 0),
        ("pathological", pulse, 4.0, 0.1, 1),
    ] {
        let sub = dir.path().join(kind);
        let out = pexcite(dir.path(), &["generate", "--kind", kind, "--horizon", "30", "--dt", "0.01", "--output-dir", kind]);
        assert_eq!(code(&out), 0);
        let out = pexcite(
            dir.path(),
            &["analyze", "--signal", &format!("{kind}/signal.csv"), "--T", &window.to_string(), "--beta", &beta.to_string(), "--t-tail", "1.5", "--output-dir", kind],
        );
        assert_eq!(code(&out), expect, "{kind}");

        let report = json(&sub.join("analyze.json"));
        let sweep = build_gram_sweep(&w);
        assert_eq!(verdict(&report["matrix"]), matrix_pe_test(&sweep, window, 1.5, beta).unwrap());
        let dirs = report["directional"].as_array().unwrap();
        assert_eq!(dirs.len(), 2);
        for (i, d) in dirs.iter().enumerate() {
            let mut e = vec![0.0; 2];
            e[i] = 1.0;
            assert_eq!(verdict(d), directional_pe_test(&sweep, &e, window, 1.5, beta).unwrap());
        }
    }
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |kind: &str| {
        pexcite(dir.path(), &["generate", "--kind", kind, "--horizon", "60", "--dt", "0.01", "--output-dir", kind]);
        let out = pexcite(dir.path(), &["analyze", "--signal", &format!("{kind}/signal.csv"), "--T", "6.3", "--beta", "0.05", "--output-dir", kind]);
        (code(&out), json(&dir.path().join(kind).join("analyze.json")))
    };
    assert_eq!(run("sinusoid").0, 0);
    let (c, zero) = run("zero");
    assert_eq!(c, 1);
    assert_eq!(zero["matrix"]["beta_star"], 0.0);
    let (c, path) = run("pathological");
    assert_eq!(c, 1);
    // each axis stays silent over a whole window
    for d in path["directional"].as_array().unwrap() {
        assert_eq!(d["pass"], false);
        assert_eq!(d["beta_star"], 0.0);
    }
}

#[test]
fn decompose_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&pexcite(p, &["generate", "--kind", "regular", "--horizon", "60", "--dt", "0.01"])), 0);
    let out = pexcite(p, &["diagnose", "--signal", "signal.csv", "--T", "6.3", "--beta", "0.01", "--t-tail", "30"]);
    assert_eq!(code(&out), 0);
    let report = json(&p.join("diagnose.json"));
    assert_eq!(report["q_pe"], 2);

    let out = pexcite(p, &["decompose", "--signal", "signal.csv", "--subspace", "diagnose.json"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max reconstruction residual"));
    assert!(json(&p.join("decompose.json"))["residual"].as_f64().unwrap() <= 1e-9);
    let w_pe = read_csv(fs::File::open(p.join("w_pe.csv")).unwrap()).unwrap();
    let w_perp = read_csv(fs::File::open(p.join("w_perp.csv")).unwrap()).unwrap();
    assert_eq!((w_pe.dim(), w_perp.dim()), (2, 1));
    // w_perp is the decaying axis up to the rounding in the estimated basis
    for j in 0..w_perp.len() {
        let t = w_perp.grid().time(j);
        assert!(w_perp.sample(j)[0].abs() <= (-t).exp() + 1e-12, "t = {t}");
    }

    let out = pexcite(p, &["decompose", "--signal", "signal.csv"]);
    assert_eq!(code(&out), 2, "neither --subspace nor --estimate");

    let cfg = r#"{"signal": "signal.csv", "psi_true": [1, -2, 3], "psi_hat0": [0, 0, 0],
                  "gain": 2.0, "subspace": "diagnose.json", "output_dir": "sim"}"#;
    fs::write(p.join("sim.json"), cfg).unwrap();
    let out = pexcite(p, &["simulate", "--config", "sim.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let sim = json(&p.join("sim/simulate.json"));
    assert_eq!(sim["regulated"], true);
    assert_eq!(sim["lyapunov_non_increasing"], true);
    assert!(sim["membership"]["distance"].as_f64().unwrap() <= 1e-2);
}

/// Re-running any command from its manifest reproduces its outputs byte for byte.
#[test]
fn manifest_rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ok = |args: &[&str]| {
        let out = pexcite(p, args);
        assert!(code(&out) <= 1, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["generate", "--kind", "vanishing", "--horizon", "20", "--dt", "0.01", "--freqs", "1,2,3", "--rate", "0.1", "--output-dir", "a"]);
    ok(&["analyze", "--signal", "a/signal.csv", "--T", "3", "--beta", "0.01", "--output-dir", "a"]);
    ok(&["diagnose", "--signal", "a/signal.csv", "--T", "3", "--beta", "0.001", "--seed", "7", "--output-dir", "a"]);
    ok(&["decompose", "--signal", "a/signal.csv", "--estimate", "--T", "3", "--beta", "0.001", "--output-dir", "a"]);
    fs::write(p.join("sim.json"), r#"{"signal": "a/signal.csv", "psi_true": [1, 1, 1], "psi_hat0": [0, 0, 0], "output_dir": "a"}"#).unwrap();
    ok(&["simulate", "--config", "sim.json"]);

    let files = [
        "generate.manifest.json", "signal.csv", "analyze.manifest.json", "analyze.json",
        "diagnose.manifest.json", "diagnose.json", "decompose.manifest.json", "decompose.json",
        "w_pe.csv", "w_perp.csv", "simulate.manifest.json", "simulate.json", "trajectory.csv",
    ];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(p.join("a").join(f)).unwrap()).collect();
    for cmd in ["generate", "analyze", "diagnose", "decompose", "simulate"] {
        ok(&[cmd, "--config", &format!("a/{cmd}.manifest.json")]);
    }
    for (f, old) in files.iter().zip(&before) {
        assert_eq!(&fs::read(p.join("a").join(f)).unwrap(), old, "{f} changed");
    }
}
