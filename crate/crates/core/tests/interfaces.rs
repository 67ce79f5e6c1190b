//! Round trips of the on-disk formats and end-to-end sweep output shape.

use std::path::PathBuf;

use jamfield_core::config::{ConfigFile, SCHEMA_VERSION};
use jamfield_core::estimators::{estimate, EstimateReport, EstimatorKind, EstimatorSpec};
use jamfield_core::harness::{fit_context, run_sweep, SweepResult};
use jamfield_core::nn::{InputScaling, MlpParams};
use jamfield_core::output::{emit_outputs, results_csv, RESULTS_HEADER};
use jamfield_core::sim::generate_dataset;
use jamfield_core::{Error, ExecMode};

fn shipped(name: &str) -> ConfigFile {
    ConfigFile::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn shipped_configs_validate() {
    for name in ["open_sky.toml", "urban.toml"] {
        let c = shipped(name);
        assert_eq!(c.schema_version, SCHEMA_VERSION);
        c.experiment().unwrap();
    }
}

#[test]
fn config_survives_toml_round_trip() {
    let c = shipped("urban.toml");
    assert_eq!(ConfigFile::parse(&c.to_toml()).unwrap(), c);
}

#[test]
fn config_rejects_unknown_keys_and_versions() {
    let text =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/open_sky.toml")).unwrap();
    assert!(matches!(
        ConfigFile::parse(&text.replace("schema_version = 1", "schema_version = 2")),
        Err(Error::Config(_))
    ));
    assert!(ConfigFile::parse(&text.replace("top_k = 15", "top_k = 15\ntopk = 3")).is_err());
}

#[test]
fn param_file_round_trip_is_exact() {
    let net =
        MlpParams::init_uniform(vec![2, 200, 100, 1], InputScaling::from_bounds(&[0.0, 0.0], &[1000.0, 1000.0]), 5)
            .unwrap();
    let text = net.to_text();
    assert!(text.starts_with("jamfield-mlp v1\n"));
    let back = MlpParams::from_text(&text).unwrap();
    assert_eq!(back.flat(), net.flat());
    assert_eq!(back.forward(&[123.0, 456.0]), net.forward(&[123.0, 456.0]));
}

#[test]
fn param_file_rejects_truncation() {
    let net = MlpParams::init_uniform(vec![2, 4, 1], InputScaling::identity(2), 1).unwrap();
    let text = net.to_text();
    let cut: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    assert!(MlpParams::from_text(&cut).is_err());
    assert!(MlpParams::from_text(&text.replace("v1", "v9")).is_err());
}

#[test]
fn report_json_round_trip() {
    let sc = shipped("open_sky.toml").scenario().unwrap();
    let data = generate_dataset(&sc, ExecMode::Serial).unwrap();
    let mut spec = EstimatorSpec::new(EstimatorKind::Apbm);
    spec.hidden = vec![8, 4];
    spec.epochs = 50;
    let r = estimate(&data, &spec, &fit_context(&sc)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["estimator"], "apbm");
    let back: EstimateReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back.theta_hat, r.theta_hat);
    assert_eq!(back.p0_hat, r.p0_hat);
}

#[test]
fn empty_sweep_writes_header_only() {
    assert_eq!(results_csv(&SweepResult::default()), format!("{RESULTS_HEADER}\n"));
}

#[test]
fn small_sweep_shape_and_bound_trend() {
    let mut cfg = shipped("open_sky.toml").experiment().unwrap();
    cfg.estimators = vec![EstimatorSpec::new(EstimatorKind::MlePathloss)];
    cfg.inr_grid_db = vec![0.0, 10.0, 20.0];
    cfg.n_mc = 5;
    let r = run_sweep(&cfg, ExecMode::Parallel).unwrap();
    let csv = results_csv(&r);
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let bound: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.contains(",1,"))
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(bound.windows(2).all(|w| w[1] < w[0]), "{bound:?}");
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&r, dir.path()).unwrap();
    assert_eq!(written.len(), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("results.csv")).unwrap(), csv);
}
