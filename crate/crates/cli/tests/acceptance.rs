//! CLI acceptance: reproducibility of every command under a fixed seed
//! (criterion 10), the documented pipeline flows, and exit codes.

use pmme_lab::model::{KernelSpec, ModelParams};
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pmme-lab")
}

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pmme_lab_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .env_remove("PMME_LAB_SEED")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_theta(dir: &Path, theta: &ModelParams) -> PathBuf {
    let path = dir.join("theta.json");
    std::fs::write(&path, serde_json::to_string_pretty(theta).unwrap()).unwrap();
    path
}

fn m1_theta() -> ModelParams {
    ModelParams::new(0.5, 0.02, 0.005, 0.015, KernelSpec::Exp { b0: 0.05 }).unwrap()
}

fn m0_theta() -> ModelParams {
    ModelParams::new(0.5, 0.02, 0.005, 0.015, KernelSpec::Delta).unwrap()
}

fn bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {path:?}: {e}"))
}

/// Criterion 10: byte-identical outputs across two runs of every command
/// in timestamp-suppressed mode with fixed seeds.
#[test]
fn criterion_10_reproducibility() {
    let dir = work_dir("repro");
    let theta = write_theta(&dir, &m1_theta());
    let theta_s = theta.to_str().unwrap();
    let path = |name: &str| dir.join(name).to_str().unwrap().to_string();

    let mut identical = true;
    let mut check = |name: &str, args: Vec<String>, outputs: Vec<String>| {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&argv);
        let first: Vec<Vec<u8>> = outputs.iter().map(|o| bytes(Path::new(o))).collect();
        run_ok(&argv);
        let second: Vec<Vec<u8>> = outputs.iter().map(|o| bytes(Path::new(o))).collect();
        for (i, (a, b)) in first.iter().zip(&second).enumerate() {
            if a != b {
                identical = false;
                println!(
                    "criterion 10: output {} of {name} differs between runs",
                    outputs[i]
                );
            }
        }
    };

    let data = path("data.json");
    check(
        "simulate",
        vec![
            "simulate".into(),
            "--theta".into(),
            theta_s.into(),
            "--preps".into(),
            "tableI".into(),
            "--times".into(),
            "log:0.1:100:25".into(),
            "--shots".into(),
            "2048".into(),
            "--seed".into(),
            "7".into(),
            "--no-timestamp".into(),
            "-o".into(),
            data.clone(),
        ],
        vec![data.clone()],
    );

    let mitigated = path("mitigated.json");
    check(
        "mitigate",
        vec![
            "mitigate".into(),
            "--data".into(),
            data.clone(),
            "--no-timestamp".into(),
            "-o".into(),
            mitigated.clone(),
        ],
        vec![mitigated],
    );

    let series = path("series.json");
    let series_csv = path("series.csv");
    check(
        "tomo",
        vec![
            "tomo".into(),
            "--data".into(),
            data.clone(),
            "--prep".into(),
            "psi0".into(),
            "--resamples".into(),
            "100".into(),
            "--seed".into(),
            "3".into(),
            "-o".into(),
            series.clone(),
            "--csv".into(),
            series_csv.clone(),
        ],
        vec![series, series_csv],
    );

    let fits = path("fits.json");
    check(
        "fit",
        vec![
            "fit".into(),
            "--data".into(),
            data.clone(),
            "--prep".into(),
            "psi0".into(),
            "--models".into(),
            "M0,M1".into(),
            "--multistart".into(),
            "8".into(),
            "--resamples".into(),
            "100".into(),
            "--seed".into(),
            "1".into(),
            "--no-timestamp".into(),
            "-o".into(),
            fits.clone(),
        ],
        vec![fits.clone()],
    );

    let val = path("validate.csv");
    check(
        "validate",
        vec![
            "validate".into(),
            "--fits".into(),
            fits.clone(),
            "--data".into(),
            data.clone(),
            "--preps".into(),
            "psi1,psi2".into(),
            "--resamples".into(),
            "100".into(),
            "--seed".into(),
            "5".into(),
            "-o".into(),
            val.clone(),
        ],
        vec![val],
    );

    let nm = path("nonmark.json");
    check(
        "nonmark",
        vec![
            "nonmark".into(),
            "--fits".into(),
            fits.clone(),
            "--pair".into(),
            "plus,minus".into(),
            "--horizon".into(),
            "60".into(),
            "--no-timestamp".into(),
            "-o".into(),
            nm.clone(),
        ],
        vec![nm],
    );

    let cp = path("cp.csv");
    check(
        "cpcheck",
        vec![
            "cpcheck".into(),
            "--theta".into(),
            theta_s.into(),
            "--times".into(),
            "lin:0:100:101".into(),
            "-o".into(),
            cp.clone(),
        ],
        vec![cp],
    );

    let traj = path("traj.csv");
    check(
        "predict",
        vec![
            "predict".into(),
            "--fits".into(),
            fits.clone(),
            "--model".into(),
            "M1".into(),
            "--bloch".into(),
            "1,0,0".into(),
            "--times".into(),
            "log:0.1:100:50".into(),
            "-o".into(),
            traj.clone(),
        ],
        vec![traj],
    );

    let report_dir = path("report");
    check(
        "report",
        vec![
            "report".into(),
            "--data".into(),
            data.clone(),
            "--fits".into(),
            fits.clone(),
            "--out".into(),
            report_dir.clone(),
            "--resamples".into(),
            "60".into(),
            "--seed".into(),
            "9".into(),
            "--no-timestamp".into(),
        ],
        vec![
            format!("{report_dir}/manifest.json"),
            format!("{report_dir}/fits.json"),
            format!("{report_dir}/series_psi0.csv"),
            format!("{report_dir}/validate.csv"),
            format!("{report_dir}/nonmark.json"),
        ],
    );

    println!(
        "criterion 10 (CLI reproducibility): {} — byte-identical JSON/CSV outputs across two runs of all nine commands",
        if identical { "PASS" } else { "FAIL" }
    );
    assert!(identical, "outputs differed between identical runs");
}

/// The documented simulate invocation yields 5 x 25 x 3 records.
#[test]
fn simulate_cardinality_matches_protocol() {
    let dir = work_dir("cardinality");
    let theta = write_theta(&dir, &m1_theta());
    let data = dir.join("data.json");
    run_ok(&[
        "simulate",
        "--theta",
        theta.to_str().unwrap(),
        "--preps",
        "tableI",
        "--times",
        "log:0.1:100:25",
        "--shots",
        "8192",
        "--seed",
        "7",
        "-o",
        data.to_str().unwrap(),
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&bytes(&data)).unwrap();
    assert_eq!(parsed["records"].as_array().unwrap().len(), 375);
}

/// Fit on the fitting preparation, validate on the rest; the percentile
/// CSV must parse and the ranking must prefer a memory kernel on
/// memory-kernel truth.
#[test]
fn full_pipeline_smoke() {
    let dir = work_dir("pipeline");
    let theta = write_theta(&dir, &m1_theta());
    let data = dir.join("data.json");
    run_ok(&[
        "simulate",
        "--theta",
        theta.to_str().unwrap(),
        "--seed",
        "11",
        "-o",
        data.to_str().unwrap(),
    ]);
    let fits = dir.join("fits.json");
    run_ok(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--prep",
        "psi0",
        "--models",
        "M0,M1,M2",
        "--seed",
        "1",
        "--no-timestamp",
        "-o",
        fits.to_str().unwrap(),
    ]);
    let bundle: serde_json::Value = serde_json::from_slice(&bytes(&fits)).unwrap();
    let ranking = bundle["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 3);
    let top = ranking[0]["model"].as_str().unwrap();
    assert!(
        top == "M1" || top == "M2",
        "expected a memory kernel first, got {top}"
    );

    let val = dir.join("validate.csv");
    run_ok(&[
        "validate",
        "--fits",
        fits.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--preps",
        "psi1,psi2,psi3,psi4",
        "--seed",
        "5",
        "-o",
        val.to_str().unwrap(),
    ]);
    let text = String::from_utf8(bytes(&val)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "model,n_series,n_points,p5,p50,p95");
    let mut medians = std::collections::BTreeMap::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "4");
        assert_eq!(cols[2], "100");
        medians.insert(cols[0].to_string(), cols[4].parse::<f64>().unwrap());
    }
    // The memory model predicts the held-out states better.
    assert!(medians["M1"] < medians["M0"], "{medians:?}");
}

/// A purely Markovian fit produces exactly zero backflow.
#[test]
fn nonmark_measure_vanishes_for_markovian_fit() {
    let dir = work_dir("nonmark_zero");
    let theta = write_theta(&dir, &m0_theta());
    let data = dir.join("data.json");
    run_ok(&[
        "simulate",
        "--theta",
        theta.to_str().unwrap(),
        "--seed",
        "2",
        "-o",
        data.to_str().unwrap(),
    ]);
    let fits = dir.join("fits.json");
    run_ok(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--prep",
        "psi0",
        "--models",
        "M0",
        "--seed",
        "1",
        "--no-timestamp",
        "-o",
        fits.to_str().unwrap(),
    ]);
    let nm = dir.join("nm.json");
    run_ok(&[
        "nonmark",
        "--fits",
        fits.to_str().unwrap(),
        "--pair",
        "plus,minus",
        "--horizon",
        "100",
        "--no-timestamp",
        "-o",
        nm.to_str().unwrap(),
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&bytes(&nm)).unwrap();
    let reports = parsed["model_reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0][0].as_str().unwrap(), "M0");
    assert_eq!(reports[0][1]["n_measure"].as_f64().unwrap(), 0.0);
}

#[test]
fn numerical_failures_exit_with_code_two() {
    // A fit bundle whose model never lets the refinement settle at an
    // absurdly tight tolerance exercises the numerical-failure path.
    let dir = work_dir("exit2");
    let theta = ModelParams::new(0.5, 0.05, 0.002, 0.012, KernelSpec::Exp { b0: 0.02 }).unwrap();
    let bundle = serde_json::json!({
        "schema_version": 1,
        "tool_version": "0.1.0",
        "seed": 0,
        "prep_labels": ["psi0"],
        "fits": [{
            "model": "M1",
            "theta": serde_json::to_value(theta).unwrap(),
            "chi2": 0.0,
            "n_params": 5,
            "aic": 0.0,
            "converged": true,
            "prep_labels": ["psi0"],
            "series_fingerprint": 0,
            "starts": []
        }]
    });
    let fits = dir.join("fits.json");
    std::fs::write(&fits, serde_json::to_string_pretty(&bundle).unwrap()).unwrap();
    let out = run(&[
        "nonmark",
        "--fits",
        fits.to_str().unwrap(),
        "--pair",
        "plus,minus",
        "--horizon",
        "100",
        "--tol",
        "1e-15",
        "-o",
        dir.join("nm.json").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    // Unknown command: usage error.
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
    // Unknown flag: usage error.
    let out = run(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(64));
    // Missing input file: validation error.
    let out = run(&[
        "tomo",
        "--data",
        "/nonexistent/data.json",
        "--prep",
        "psi0",
        "--seed",
        "1",
        "-o",
        "/tmp/x.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // Help exits cleanly.
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn seed_comes_from_flag_config_or_environment() {
    let dir = work_dir("seeds");
    let theta = write_theta(&dir, &m0_theta());
    let data = dir.join("data.json");
    run_ok(&[
        "simulate",
        "--theta",
        theta.to_str().unwrap(),
        "--shots",
        "256",
        "--times",
        "log:0.1:10:4",
        "--seed",
        "21",
        "-o",
        data.to_str().unwrap(),
    ]);

    // No seed anywhere: a randomized command refuses to run.
    let out = Command::new(bin())
        .args([
            "tomo",
            "--data",
            data.to_str().unwrap(),
            "--prep",
            "psi0",
            "-o",
            dir.join("a.json").to_str().unwrap(),
        ])
        .env_remove("PMME_LAB_SEED")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Environment fallback works and matches the explicit flag.
    let out = Command::new(bin())
        .args([
            "tomo",
            "--data",
            data.to_str().unwrap(),
            "--prep",
            "psi0",
            "-o",
            dir.join("env.json").to_str().unwrap(),
        ])
        .env("PMME_LAB_SEED", "33")
        .output()
        .unwrap();
    assert!(out.status.success());
    run_ok(&[
        "tomo",
        "--data",
        data.to_str().unwrap(),
        "--prep",
        "psi0",
        "--seed",
        "33",
        "-o",
        dir.join("flag.json").to_str().unwrap(),
    ]);
    assert_eq!(bytes(&dir.join("env.json")), bytes(&dir.join("flag.json")));

    // The flag wins over the environment.
    let out = Command::new(bin())
        .args([
            "tomo",
            "--data",
            data.to_str().unwrap(),
            "--prep",
            "psi0",
            "--seed",
            "34",
            "-o",
            dir.join("flagwins.json").to_str().unwrap(),
        ])
        .env("PMME_LAB_SEED", "33")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(
        bytes(&dir.join("flagwins.json")),
        bytes(&dir.join("flag.json"))
    );

    // Config-file seed is honored too.
    let config = dir.join("config.json");
    std::fs::write(&config, r#"{"seed": 33}"#).unwrap();
    run_ok(&[
        "tomo",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--prep",
        "psi0",
        "-o",
        dir.join("conf.json").to_str().unwrap(),
    ]);
    assert_eq!(bytes(&dir.join("conf.json")), bytes(&dir.join("flag.json")));
}
