//! Monte Carlo INR sweeps.
//!
//! Realization `m` of every INR level shares observer positions and unit
//! noise draws (the seed depends on `m` only), so the INR axis is swept with
//! common random numbers. Realizations run as independent tasks; results
//! are reduced in a fixed order, so output never depends on worker count.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::crb::crb_2d;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateReport, EstimatorSpec, FitContext};
use crate::exec::{map_indexed, with_workers, ExecMode};
use crate::field::Position;
use crate::nn::InputScaling;
use crate::rng::derive_seed;
use crate::sim::{generate_dataset, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub estimators: Vec<EstimatorSpec>,
    pub inr_grid_db: Vec<f64>,
    pub n_mc: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioConfig, estimators: Vec<EstimatorSpec>, inr_grid_db: Vec<f64>, n_mc: usize) -> Self {
        Self {
            scenario,
            estimators,
            inr_grid_db,
            n_mc,
            output_dir: PathBuf::from("out"),
            master_seed: 1,
            workers: None,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n_mc == 0 {
            return Err(Error::InvalidParameter("n_mc must be >= 1".into()));
        }
        if self.inr_grid_db.is_empty() {
            return Err(Error::InvalidParameter("INR grid must be non-empty".into()));
        }
        if self.inr_grid_db.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("INR grid must be strictly increasing".into()));
        }
        for e in &self.estimators {
            e.validate()?;
        }
        let mut labels: Vec<&str> = self.estimators.iter().map(|e| e.label()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("estimator labels must be unique".into()));
        }
        Ok(())
    }

    /// Scenario seed of Monte Carlo realization `m`.
    pub fn realization_seed(&self, m: usize) -> u64 {
        derive_seed(self.master_seed, &[m as u64])
    }
}

/// Aggregate of one (estimator, INR) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimator: String,
    pub inr_db: f64,
    /// Per-dimension RMSE over realizations that produced an estimate, m.
    pub rmse: Vec<f64>,
    pub n_estimates: usize,
    pub n_converged: usize,
    pub n_total: usize,
    pub mean_ms: f64,
}

impl CellResult {
    pub fn converged_frac(&self) -> f64 {
        self.n_converged as f64 / self.n_total as f64
    }

    /// RMS over dimensions of the per-dimension RMSE.
    pub fn rmse_mean(&self) -> f64 {
        (self.rmse.iter().map(|r| r * r).sum::<f64>() / self.rmse.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbRow {
    pub inr_db: f64,
    /// sqrt of the realization-averaged variance bound, per dimension.
    pub rmse_bound: Vec<f64>,
    /// Realizations whose observer geometry admitted a bound.
    pub n_valid: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub dim: usize,
    pub estimators: Vec<String>,
    pub inr_grid_db: Vec<f64>,
    /// Estimator-major, then INR.
    pub cells: Vec<CellResult>,
    pub crb: Vec<CrbRow>,
    pub record_timing: bool,
}

impl SweepResult {
    pub fn cell(&self, estimator: &str, inr_db: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.estimator == estimator && c.inr_db == inr_db)
    }

    pub fn crb_at(&self, inr_db: f64) -> Option<&CrbRow> {
        self.crb.iter().find(|c| c.inr_db == inr_db)
    }
}

/// Per-dimension `sqrt(mean((θ̂ − θ)²))`.
pub fn rmse_per_dimension(estimates: &[Position], truth: &Position) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    let dim = truth.dim();
    let mut acc = vec![0.0; dim];
    for e in estimates {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: e.dim() });
        }
        for ((a, x), t) in acc.iter_mut().zip(e.coords()).zip(truth.coords()) {
            *a += (x - t) * (x - t);
        }
    }
    Ok(acc.into_iter().map(|a| (a / estimates.len() as f64).sqrt()).collect())
}

/// Outcome of one (INR, realization) task.
#[derive(Debug)]
pub struct RealizationOutcome {
    pub inr_index: usize,
    pub realization: usize,
    pub crb_variance: Option<Vec<f64>>,
    pub estimates: Vec<Result<EstimateReport>>,
}

pub fn fit_context(scenario: &ScenarioConfig) -> FitContext {
    FitContext {
        p0: scenario.jammer.p0,
        gamma: scenario.jammer.gamma,
        d_far: scenario.d_far,
        scaling: InputScaling::from_bounds(&scenario.area.min, &scenario.area.max),
    }
}

/// Generates one realization and runs every estimator on it.
pub fn run_realization(cfg: &ExperimentConfig, inr_index: usize, realization: usize) -> RealizationOutcome {
    let scenario = ScenarioConfig {
        inr_db: cfg.inr_grid_db[inr_index],
        rng_seed: cfg.realization_seed(realization),
        ..cfg.scenario.clone()
    };
    let ctx = fit_context(&scenario);
    let dataset = generate_dataset(&scenario, ExecMode::Serial);
    let (crb_variance, estimates) = match dataset {
        Ok(ds) => {
            let crb = if ds.dim() == 2 && ds.sigma() > 0.0 {
                crb_2d(&ds.positions(), &scenario.jammer, ds.sigma()).ok().map(|c| c.per_dimension_variance)
            } else {
                None
            };
            let estimates = cfg
                .estimators
                .iter()
                .enumerate()
                .map(|(k, spec)| {
                    let spec = EstimatorSpec {
                        seed: derive_seed(spec.seed, &[cfg.master_seed, realization as u64, k as u64]),
                        ..spec.clone()
                    };
                    estimate(&ds, &spec, &ctx)
                })
                .collect();
            (crb, estimates)
        }
        Err(e) => {
            let msg = e.to_string();
            (None, cfg.estimators.iter().map(|_| Err(Error::InvalidParameter(msg.clone()))).collect())
        }
    };
    RealizationOutcome { inr_index, realization, crb_variance, estimates }
}

/// Runs every (INR, realization) task and reduces them in order.
pub fn run_sweep(cfg: &ExperimentConfig, mode: ExecMode) -> Result<SweepResult> {
    cfg.validate()?;
    let n_inr = cfg.inr_grid_db.len();
    let tasks = n_inr * cfg.n_mc;
    let outcomes =
        with_workers(cfg.workers, || map_indexed(mode, tasks, |t| run_realization(cfg, t / cfg.n_mc, t % cfg.n_mc)));
    Ok(reduce(cfg, &outcomes))
}

/// Realization-averaged bound per INR without running any estimator.
pub fn crb_sweep(cfg: &ExperimentConfig, mode: ExecMode) -> Result<Vec<CrbRow>> {
    let cfg = ExperimentConfig { estimators: Vec::new(), ..cfg.clone() };
    Ok(run_sweep(&cfg, mode)?.crb)
}

/// Deterministic ordered reduction of realization outcomes.
pub fn reduce(cfg: &ExperimentConfig, outcomes: &[RealizationOutcome]) -> SweepResult {
    let dim = cfg.scenario.jammer.theta.dim();
    let truth = &cfg.scenario.jammer.theta;
    let mut cells = Vec::new();
    for (k, spec) in cfg.estimators.iter().enumerate() {
        for (i, &inr) in cfg.inr_grid_db.iter().enumerate() {
            let rows: Vec<&RealizationOutcome> = outcomes.iter().filter(|o| o.inr_index == i).collect();
            let oks: Vec<&EstimateReport> = rows.iter().filter_map(|o| o.estimates[k].as_ref().ok()).collect();
            let thetas: Vec<Position> = oks.iter().map(|r| r.theta_hat.clone()).collect();
            let rmse = rmse_per_dimension(&thetas, truth).unwrap_or_else(|_| vec![f64::NAN; dim]);
            let mean_ms = if oks.is_empty() {
                f64::NAN
            } else {
                1e3 * oks.iter().map(|r| r.wall_time_s).sum::<f64>() / oks.len() as f64
            };
            cells.push(CellResult {
                estimator: spec.label().to_string(),
                inr_db: inr,
                rmse,
                n_estimates: oks.len(),
                n_converged: oks.iter().filter(|r| r.converged).count(),
                n_total: rows.len(),
                mean_ms,
            });
        }
    }
    let crb = cfg
        .inr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &inr)| {
            let vars: Vec<&Vec<f64>> =
                outcomes.iter().filter(|o| o.inr_index == i).filter_map(|o| o.crb_variance.as_ref()).collect();
            let rmse_bound = if vars.is_empty() {
                vec![f64::NAN; dim]
            } else {
                (0..dim).map(|d| (vars.iter().map(|v| v[d]).sum::<f64>() / vars.len() as f64).sqrt()).collect()
            };
            CrbRow { inr_db: inr, rmse_bound, n_valid: vars.len() }
        })
        .collect();
    SweepResult {
        dim,
        estimators: cfg.estimators.iter().map(|e| e.label().to_string()).collect(),
        inr_grid_db: cfg.inr_grid_db.clone(),
        cells,
        crb,
        record_timing: cfg.record_timing,
    }
}
