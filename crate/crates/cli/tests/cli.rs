use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
schema_version = 1

[scenario]
regime = "pathloss"
n_samples = 400
top_k = 15

[sweep]
inr_grid_db = [10.0, 20.0]
n_mc = 3
master_seed = 7

[[estimators]]
kind = "mle_pathloss"
n_starts = 2
epochs = 200

[[estimators]]
kind = "apbm"
epochs = 100
hidden = [8, 4]
"#;

fn jamfield(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_jamfield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let o = jamfield(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "estimator,inr_db,dim,rmse_m,crb_rmse_m,converged_frac,mean_ms"
    );
    // 2 estimators x 2 INR levels x 2 dimensions
    assert_eq!(lines.count(), 8);
    assert!(std::fs::read_to_string(out.join("rmse_vs_inr.svg"))
        .unwrap()
        .starts_with("<svg"));
    assert!(!out.join("timings.csv").exists());
}

#[test]
fn seed_and_workers_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let read = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--config", &cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(jamfield(&args).status.success());
        std::fs::read(out.join("results.csv")).unwrap()
    };
    let a = read("a", &["--workers", "1"]);
    let b = read("b", &["--workers", "3"]);
    let c = read("c", &["--seed", "8"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn timing_flag_fills_mean_ms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("t");
    assert!(jamfield(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--timing"
    ])
    .status
    .success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| !l.ends_with(',')));
    assert!(out.join("timings.csv").exists());
}

#[test]
fn crb_prints_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = jamfield(&["crb", "--config", &cfg]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    // higher INR, tighter bound
    assert!(rows[1][1] < rows[0][1] && rows[1][2] < rows[0][2]);
}

#[test]
fn field_writes_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("f");
    let o = jamfield(&[
        "field",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "11",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(out.join("field.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 121
    );
    assert_eq!(
        std::fs::read_to_string(out.join("field.svg"))
            .unwrap()
            .matches("<rect")
            .count(),
        121
    );
}

#[test]
fn fit_prints_reports_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("p");
    let o = jamfield(&[
        "fit",
        "--config",
        &cfg,
        "--inr",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["estimator"], "mle_pathloss");
    assert!(reports[1]["theta_hat"].is_array() || reports[1]["theta_hat"].is_object());
    let params = std::fs::read_to_string(out.join("apbm.mlp")).unwrap();
    assert!(params.starts_with("jamfield-mlp"));
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(
        &p,
        "schema_version = 99\n[scenario]\nregime = \"pathloss\"\n",
    )
    .unwrap();
    let o = jamfield(&["run", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));
}
