//! Serial vs data-parallel execution of the hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use jamfield_core::config::ConfigFile;
use jamfield_core::estimators::{EstimatorKind, EstimatorSpec};
use jamfield_core::harness::{run_sweep, ExperimentConfig};
use jamfield_core::sim::{field_grid, generate_dataset, ScenarioConfig};
use jamfield_core::ExecMode;

const MODES: [ExecMode; 2] = [ExecMode::Serial, ExecMode::Parallel];

fn shipped(name: &str) -> ConfigFile {
    let p = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ConfigFile::load(&p).expect("config loads")
}

fn dataset(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate_dataset");
    g.sample_size(10);
    for (name, sc) in [
        ("open_sky", shipped("open_sky.toml").scenario().unwrap()),
        ("urban", shipped("urban.toml").scenario().unwrap()),
    ] {
        for mode in MODES {
            g.bench_with_input(BenchmarkId::new(name, format!("{mode:?}")), &sc, |b, sc: &ScenarioConfig| {
                b.iter(|| generate_dataset(black_box(sc), mode).unwrap())
            });
        }
    }
    g.finish();
}

fn field(c: &mut Criterion) {
    let sc = shipped("urban.toml").scenario().unwrap();
    let mut g = c.benchmark_group("field_grid_101");
    g.sample_size(10);
    for mode in MODES {
        g.bench_function(format!("{mode:?}"), |b| b.iter(|| field_grid(black_box(&sc), 101, 101, mode).unwrap()));
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg: ExperimentConfig = shipped("open_sky.toml").experiment().unwrap();
    let mut apbm = EstimatorSpec::new(EstimatorKind::Apbm);
    apbm.epochs = 50;
    cfg.estimators = vec![EstimatorSpec::new(EstimatorKind::MlePathloss), apbm];
    cfg.inr_grid_db = vec![10.0, 20.0];
    cfg.n_mc = 4;
    let mut g = c.benchmark_group("sweep_small");
    g.sample_size(10);
    for mode in MODES {
        g.bench_function(format!("{mode:?}"), |b| b.iter(|| run_sweep(black_box(&cfg), mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, dataset, field, sweep);
criterion_main!(benches);
