use std::path::Path;
use std::process::{Command, Output};

use nfbeam_cli::{evaluate, parse_config, run, CliError, Kind};
use serde_json::Value;

fn nfb(dir: &Path, kind: &str, config: &str, extra: &[&str], threads: &str) -> Output {
    let cfg = dir.join(format!("{kind}.json"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nfb"))
        .arg(kind)
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .env("NFB_THREADS", threads)
        .output()
        .unwrap()
}

fn error_key(e: CliError) -> Option<String> {
    match e {
        CliError::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn widths_config_gets_defaults() {
    let cfg = parse_config(r#"{"kind":"widths","n":512}"#).unwrap();
    assert_eq!(cfg.kind, Kind::Widths);
    assert_eq!(cfg.n, 512);
    assert_eq!(cfg.wavelength, 0.01);
    assert_eq!(cfg.spacing, 0.005);
    assert_eq!(cfg.seed, None);
}

#[test]
fn stochastic_kinds_need_a_seed() {
    for kind in ["train", "track", "estimate"] {
        let err = parse_config(&format!(r#"{{"kind":"{kind}"}}"#)).unwrap_err();
        assert_eq!(error_key(err).as_deref(), Some("seed"));
    }
    assert_eq!(parse_config(r#"{"kind":"train","seed":3}"#).unwrap().seed, Some(3));
}

#[test]
fn psp_sweep_in_units_of_inverse_n_squared() {
    let cfg = parse_config(r#"{"kind":"psp","n":512,"ds_list":[50,100,200]}"#).unwrap();
    assert_eq!(cfg.ds_list, vec![50.0, 100.0, 200.0]);
    let report = evaluate(&cfg).unwrap();
    let body = String::from_utf8(report.csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "n,ds,w_pred,w_meas,g_pred,g_meas");
    assert_eq!(lines.len(), 4);
    let ds: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((ds / (50.0 / (512.0 * 512.0)) - 1.0).abs() < 1e-8);
    assert!(report.pass);
}

#[test]
fn bad_keys_are_named() {
    assert_eq!(error_key(parse_config(r#"{"kind":"widths","nn":512}"#).unwrap_err()).as_deref(), Some("nn"));
    assert_eq!(error_key(parse_config(r#"{"kind":"widths","n":"big"}"#).unwrap_err()).as_deref(), Some("n"));
    assert_eq!(error_key(parse_config(r#"{"n":512}"#).unwrap_err()).as_deref(), Some("kind"));
    assert_eq!(error_key(parse_config(r#"{"kind":"sweep"}"#).unwrap_err()).as_deref(), Some("kind"));
}

#[test]
fn widths_summary_reports_both_laws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(r#"{"kind":"widths","n":512}"#).unwrap();
    let summary = run(&cfg, dir.path()).unwrap();
    let m = &summary["metrics"];
    assert_eq!(m["predicted_angle_width"], 3.90625e-3);
    assert!((m["predicted_surrogate_width"].as_f64().unwrap() - 2.670e-5).abs() < 1e-8);
    assert!(m["measured_angle_width"].as_f64().unwrap() > 0.0);
    assert!(m["measured_surrogate_width"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["pass"], true);
    let echo: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo, summary["inputs"]);
    assert_eq!(echo["spacing"], 0.005);
    let csv = std::fs::read_to_string(dir.path().join("widths.csv")).unwrap();
    assert!(csv.starts_with("n,axis,predicted,measured,rel_dev\n"));
}

#[test]
fn train_summary_counts_pilots() {
    let cfg = parse_config(r#"{"kind":"train","seed":11,"trials":4}"#).unwrap();
    let report = evaluate(&cfg).unwrap();
    assert_eq!(report.metrics["pilots_exhaustive"], 5632);
    assert_eq!(report.metrics["pilots_hier"], 15);
    let body = String::from_utf8(report.csv).unwrap();
    assert_eq!(body.lines().count(), 1 + 3 * 4);
}

#[test]
fn identical_inputs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"kind":"train","trials":12}"#;
    let mut bodies = Vec::new();
    for (i, threads) in ["1", "4", "4", "0"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = nfb(dir.path(), "train", config, &["--seed", "21", "--out", out.to_str().unwrap()], threads);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        bodies.push(std::fs::read(out.join("train.csv")).unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    // other seed, other users
    let out = dir.path().join("other");
    nfb(dir.path(), "train", config, &["--seed", "22", "--out", out.to_str().unwrap()], "0");
    assert_ne!(std::fs::read(out.join("train.csv")).unwrap(), bodies[0]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let ok = nfb(dir.path(), "estimate", r#"{"kind":"estimate","n":64,"angles":128,"trials":10}"#, &["--seed", "1", "--out", out], "0");
    assert_eq!(ok.status.code(), Some(0));

    // far below the noise floor OMP cannot meet the NMSE target
    let weak = r#"{"kind":"estimate","n":64,"angles":128,"trials":10,"snr_db":-30}"#;
    let fail = nfb(dir.path(), "estimate", weak, &["--seed", "1", "--out", out], "0");
    assert_eq!(fail.status.code(), Some(2));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);

    let unseeded = nfb(dir.path(), "track", "{}", &["--out", out], "0");
    assert_eq!(unseeded.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&unseeded.stderr).unwrap();
    assert_eq!(err["error"]["type"], "config");
    assert_eq!(err["error"]["key"], "seed");

    let mismatch = nfb(dir.path(), "psp", r#"{"kind":"widths"}"#, &["--out", out], "0");
    assert_eq!(mismatch.status.code(), Some(1));

    // module errors are reported the same way
    let tiny = nfb(dir.path(), "widths", r#"{"n":1}"#, &["--out", out], "0");
    assert_eq!(tiny.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&tiny.stderr).unwrap();
    assert_eq!(err["error"]["type"], "module");

    let threads = nfb(dir.path(), "widths", "{}", &["--out", out], "many");
    assert_eq!(threads.status.code(), Some(1));
}
