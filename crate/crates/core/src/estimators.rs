//! Jammer localization estimators.
//!
//! * `mle_pathloss`: maximum likelihood under the clamped pathloss model,
//!   multi-start Adam on the negative log-likelihood.
//! * `apbm`: joint fit of θ and a neural correction `g(x; φ)` added to the
//!   clamped pathloss, with an ℓ2 penalty `β‖φ‖²`.
//! * `apbm_p0_blind`: as `apbm`, with the reference power also free.
//! * `pl_only`: the same training loop with the network switched off.
//! * `nn_only`: the network alone; θ̂ is the arg-max of the learned field.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::{clamped_grad_into, rss_at_distance, Dataset, JammerParams, Position};
use crate::nn::{AdamState, ForwardCache, InputScaling, MlpParams, DEFAULT_HIDDEN};

/// Window and threshold of the relative-cost-change stopping rule.
pub const CONVERGENCE_WINDOW: usize = 10;
pub const CONVERGENCE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MlePathloss,
    Apbm,
    ApbmP0Blind,
    PlOnly,
    NnOnly,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::MlePathloss => "mle_pathloss",
            EstimatorKind::Apbm => "apbm",
            EstimatorKind::ApbmP0Blind => "apbm_p0_blind",
            EstimatorKind::PlOnly => "pl_only",
            EstimatorKind::NnOnly => "nn_only",
        }
    }

    fn uses_network(self) -> bool {
        matches!(self, EstimatorKind::Apbm | EstimatorKind::ApbmP0Blind | EstimatorKind::NnOnly)
    }

    fn uses_pathloss(self) -> bool {
        !matches!(self, EstimatorKind::NnOnly)
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the NN-only arg-max grid is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgmaxRegion {
    /// The training observer positions themselves.
    #[default]
    Observers,
    /// Grid over the bounding box of the training observations.
    ObservationBox,
    /// Grid over the full input-scaling domain (scenario area).
    Area,
}

/// Settings of one estimator. When read from a file, omitted fields take
/// the defaults of [`EstimatorSpec::new`] for the given kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SpecFields")]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Name used in outputs; defaults to the kind name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Weight of the ℓ2 penalty on the network parameters.
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub n_starts: usize,
    /// Starting point; θ defaults to the strongest observation, P0/γ to the
    /// known values supplied by the caller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<JammerParams>,
    /// Offset added to the starting P0 (P0-blind variant only), dB.
    pub p0_init_offset_db: f64,
    pub hidden: Vec<usize>,
    /// Meters per optimizer unit of θ.
    pub theta_unit_m: f64,
    /// Step multiplier applied to the network block relative to `lr`.
    pub phi_lr_scale: f64,
    /// How network inputs are normalized.
    pub input_scaling: ScalingMode,
    pub argmax_grid: usize,
    pub argmax_region: ArgmaxRegion,
    /// Network initialization seed (mixed with the realization seed by the harness).
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFields {
    kind: EstimatorKind,
    label: Option<String>,
    beta: Option<f64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    n_starts: Option<usize>,
    init: Option<JammerParams>,
    p0_init_offset_db: Option<f64>,
    hidden: Option<Vec<usize>>,
    theta_unit_m: Option<f64>,
    phi_lr_scale: Option<f64>,
    input_scaling: Option<ScalingMode>,
    argmax_grid: Option<usize>,
    argmax_region: Option<ArgmaxRegion>,
    seed: Option<u64>,
}

impl From<SpecFields> for EstimatorSpec {
    fn from(f: SpecFields) -> Self {
        let d = EstimatorSpec::new(f.kind);
        EstimatorSpec {
            kind: f.kind,
            label: f.label,
            beta: f.beta.unwrap_or(d.beta),
            epochs: f.epochs.unwrap_or(d.epochs),
            lr: f.lr.unwrap_or(d.lr),
            n_starts: f.n_starts.unwrap_or(d.n_starts),
            init: f.init,
            p0_init_offset_db: f.p0_init_offset_db.unwrap_or(d.p0_init_offset_db),
            hidden: f.hidden.unwrap_or(d.hidden),
            theta_unit_m: f.theta_unit_m.unwrap_or(d.theta_unit_m),
            phi_lr_scale: f.phi_lr_scale.unwrap_or(d.phi_lr_scale),
            input_scaling: f.input_scaling.unwrap_or(d.input_scaling),
            argmax_grid: f.argmax_grid.unwrap_or(d.argmax_grid),
            argmax_region: f.argmax_region.unwrap_or(d.argmax_region),
            seed: f.seed.unwrap_or(d.seed),
        }
    }
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        let mut s = Self {
            kind,
            label: None,
            beta: 1.0,
            epochs: 200,
            lr: 0.4,
            n_starts: 1,
            init: None,
            p0_init_offset_db: 0.0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            theta_unit_m: 1.0,
            phi_lr_scale: 0.1,
            input_scaling: ScalingMode::default(),
            argmax_grid: 101,
            argmax_region: ArgmaxRegion::default(),
            seed: 0,
        };
        match kind {
            EstimatorKind::MlePathloss => {
                s.n_starts = 5;
                s.epochs = 500;
                s.lr = 0.1;
            }
            EstimatorKind::ApbmP0Blind => s.p0_init_offset_db = -20.0,
            // the network alone must resolve the peak at observer spacing
            EstimatorKind::NnOnly => s.input_scaling = ScalingMode::Observations,
            _ => {}
        }
        s
    }

    /// The five variants with their default settings.
    pub fn all() -> Vec<Self> {
        [
            EstimatorKind::MlePathloss,
            EstimatorKind::Apbm,
            EstimatorKind::ApbmP0Blind,
            EstimatorKind::PlOnly,
            EstimatorKind::NnOnly,
        ]
        .into_iter()
        .map(Self::new)
        .collect()
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.kind.name())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be > 0".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter("lr must be > 0".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter("beta must be >= 0".into()));
        }
        if self.kind.uses_network() && (self.hidden.is_empty() || self.hidden.contains(&0)) {
            return Err(Error::InvalidParameter("hidden layers must be non-empty".into()));
        }
        if self.kind == EstimatorKind::NnOnly && self.argmax_grid < 2 {
            return Err(Error::InvalidParameter("argmax grid needs >= 2 points per axis".into()));
        }
        if !(self.theta_unit_m > 0.0 && self.theta_unit_m.is_finite()) {
            return Err(Error::InvalidParameter("theta_unit_m must be positive".into()));
        }
        if !(self.phi_lr_scale > 0.0 && self.phi_lr_scale.is_finite()) {
            return Err(Error::InvalidParameter("phi_lr_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Normalization of network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Scenario area mapped to `[-1, 1]^D`.
    #[default]
    Area,
    /// Bounding box of the training observations mapped to `[-1, 1]^D`.
    Observations,
}

/// What the estimator is allowed to know besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitContext {
    /// Reference power (dBW) and pathloss exponent available to the estimator.
    pub p0: f64,
    pub gamma: f64,
    pub d_far: f64,
    /// Maps the scenario area to `[-1, 1]^D` (network input, area arg-max).
    pub scaling: InputScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative cost change fell below tolerance.
    Tolerance,
    /// Epoch budget exhausted.
    EpochBudget,
    /// The data cannot pin down θ (rank-deficient information).
    NonIdentifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub theta_hat: Position,
    pub p0_hat: Option<f64>,
    #[serde(skip)]
    pub phi_hat: Option<MlpParams>,
    pub final_cost: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// Cost before each epoch of the winning start.
    #[serde(skip)]
    pub cost_trace: Vec<f64>,
    pub wall_time_s: f64,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Gaussian log-likelihood of the data under the clamped pathloss model.
pub fn log_likelihood(data: &Dataset, jp: &JammerParams, d_far: f64) -> Result<f64> {
    let sigma = data.sigma();
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("log-likelihood needs sigma > 0".into()));
    }
    let sse = pathloss_sse(data, jp, d_far)?;
    let n = data.len() as f64;
    Ok(-0.5 * n * (2.0 * PI * sigma * sigma).ln() - sse / (2.0 * sigma * sigma))
}

/// Same expression with the unclamped model; non-finite at observer positions.
pub fn log_likelihood_unclamped(data: &Dataset, jp: &JammerParams) -> f64 {
    let sigma = data.sigma();
    let sse: f64 = data
        .observations()
        .iter()
        .map(|o| {
            let d = crate::field::distance_unchecked(o.x.coords(), jp.theta.coords());
            let r = o.y - rss_at_distance(d, jp.p0, jp.gamma);
            r * r
        })
        .sum();
    let n = data.len() as f64;
    -0.5 * n * (2.0 * PI * sigma * sigma).ln() - sse / (2.0 * sigma * sigma)
}

fn pathloss_sse(data: &Dataset, jp: &JammerParams, d_far: f64) -> Result<f64> {
    jp.validate()?;
    if data.dim() != jp.theta.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: jp.theta.dim() });
    }
    if !(d_far > 0.0) {
        return Err(Error::InvalidParameter("far-field distance must be positive".into()));
    }
    Ok(data
        .observations()
        .iter()
        .map(|o| {
            let d = crate::field::distance_unchecked(o.x.coords(), jp.theta.coords()).max(d_far);
            let r = o.y - rss_at_distance(d, jp.p0, jp.gamma);
            r * r
        })
        .sum())
}

/// `Σ (y − f̄(x; θ) − g(x; φ))² + β ‖φ‖²`.
pub fn apbm_cost(data: &Dataset, jp: &JammerParams, phi: &MlpParams, beta: f64, d_far: f64) -> Result<f64> {
    jp.validate()?;
    if phi.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: phi.input_dim() });
    }
    let mut cache = ForwardCache::new(phi.layer_sizes());
    let mut sse = 0.0;
    for o in data.observations() {
        let d = crate::field::distance_unchecked(o.x.coords(), jp.theta.coords()).max(d_far);
        let r = o.y - rss_at_distance(d, jp.p0, jp.gamma) - phi.forward_cached(phi.flat(), o.x.coords(), &mut cache);
        sse += r * r;
    }
    Ok(sse + beta * phi.norm_sq())
}

/// Layout of the optimized vector `z = [θ | P0 | φ]` and its objective.
struct Problem<'a> {
    data: &'a Dataset,
    d_far: f64,
    gamma: f64,
    p0_fixed: f64,
    theta_ref: Vec<f64>,
    theta_unit: Vec<f64>,
    theta_free: bool,
    p0_free: bool,
    net: Option<MlpParams>,
    beta: f64,
    dim: usize,
}

struct Scratch {
    cache: Option<ForwardCache>,
    grad_f: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn theta_len(&self) -> usize {
        if self.theta_free {
            self.dim
        } else {
            0
        }
    }

    fn p0_index(&self) -> usize {
        self.theta_len()
    }

    fn phi_offset(&self) -> usize {
        self.theta_len() + usize::from(self.p0_free)
    }

    fn len(&self) -> usize {
        self.phi_offset() + self.net.as_ref().map_or(0, |n| n.len())
    }

    fn theta(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.theta_ref[i] + self.theta_unit[i] * z[i]).collect()
    }

    fn p0(&self, z: &[f64]) -> f64 {
        if self.p0_free {
            z[self.p0_index()]
        } else {
            self.p0_fixed
        }
    }

    fn scratch(&self) -> Scratch {
        Scratch { cache: self.net.as_ref().map(|n| ForwardCache::new(n.layer_sizes())), grad_f: vec![0.0; self.dim] }
    }

    /// Cost at `z`; the gradient is written into `grad` when given.
    fn eval(&self, z: &[f64], mut grad: Option<&mut [f64]>, s: &mut Scratch) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let theta = if self.theta_free { self.theta(z) } else { Vec::new() };
        let p0 = self.p0(z);
        let phi_off = self.phi_offset();
        let mut cost = 0.0;
        for o in self.data.observations() {
            let x = o.x.coords();
            let mut pred = 0.0;
            if self.theta_free {
                let d = clamped_grad_into(x, &theta, self.gamma, self.d_far, &mut s.grad_f);
                pred += rss_at_distance(d, p0, self.gamma);
            }
            if let (Some(net), Some(cache)) = (&self.net, s.cache.as_mut()) {
                pred += net.forward_cached(&z[phi_off..], x, cache);
            }
            let r = o.y - pred;
            cost += r * r;
            if let Some(g) = grad.as_deref_mut() {
                let up = -2.0 * r;
                if self.theta_free {
                    for ((gi, df), u) in g.iter_mut().zip(&s.grad_f).zip(&self.theta_unit).take(self.dim) {
                        *gi += up * df * u;
                    }
                }
                if self.p0_free {
                    g[self.p0_index()] += up;
                }
                if let (Some(net), Some(cache)) = (&self.net, s.cache.as_mut()) {
                    net.backward_accumulate(&z[phi_off..], cache, up, &mut g[phi_off..]);
                }
            }
        }
        if self.net.is_some() && self.beta > 0.0 {
            let phi = &z[phi_off..];
            cost += self.beta * phi.iter().map(|v| v * v).sum::<f64>();
            if let Some(g) = grad {
                for (gi, p) in g[phi_off..].iter_mut().zip(phi) {
                    *gi += 2.0 * self.beta * p;
                }
            }
        }
        cost
    }
}

struct AdamRun {
    z: Vec<f64>,
    cost: f64,
    trace: Vec<f64>,
    stop: StopReason,
    iterations: usize,
}

fn run_adam(problem: &Problem<'_>, mut z: Vec<f64>, epochs: usize, lr: f64, phi_lr_scale: f64) -> Result<AdamRun> {
    let mut adam = AdamState::new(z.len(), lr);
    if problem.net.is_some() && phi_lr_scale != 1.0 {
        adam.scale_lr(problem.phi_offset()..z.len(), phi_lr_scale);
    }
    let mut grad = vec![0.0; z.len()];
    let mut s = problem.scratch();
    let mut trace = Vec::with_capacity(epochs + 1);
    let mut stop = StopReason::EpochBudget;
    for epoch in 0..epochs {
        let c = problem.eval(&z, Some(&mut grad), &mut s);
        if !c.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!("non-finite cost at epoch {epoch}")));
        }
        trace.push(c);
        if trace.len() > CONVERGENCE_WINDOW {
            let old = trace[trace.len() - 1 - CONVERGENCE_WINDOW];
            if (old - c).abs() <= CONVERGENCE_RTOL * c.abs().max(f64::MIN_POSITIVE) {
                stop = StopReason::Tolerance;
                break;
            }
        }
        adam.step(&mut z, &grad)?;
    }
    let cost = problem.eval(&z, None, &mut s);
    if !cost.is_finite() {
        return Err(Error::Diverged("non-finite final cost".into()));
    }
    let iterations = adam.step_count() as usize;
    Ok(AdamRun { z, cost, trace, stop, iterations })
}

fn strongest_observations(data: &Dataset, k: usize) -> Vec<&Position> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.observations()[b].y.total_cmp(&data.observations()[a].y));
    idx.into_iter().take(k).map(|i| &data.observations()[i].x).collect()
}

fn check_common(data: &Dataset, spec: &EstimatorSpec, ctx: &FitContext) -> Result<()> {
    spec.validate()?;
    if !(ctx.gamma > 0.0) || !ctx.p0.is_finite() {
        return Err(Error::InvalidParameter("known gamma/p0 invalid".into()));
    }
    if !(ctx.d_far > 0.0) {
        return Err(Error::InvalidParameter("far-field distance must be positive".into()));
    }
    if ctx.scaling.center.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: ctx.scaling.center.len() });
    }
    if let Some(init) = &spec.init {
        if init.theta.dim() != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), got: init.theta.dim() });
        }
    }
    Ok(())
}

/// Smallest-to-largest eigenvalue ratio proxy of Σ ∇f̄ ∇f̄ᵀ at θ; zero when
/// the observations carry no information about some direction of θ.
fn information_ratio(data: &Dataset, theta: &[f64], gamma: f64, d_far: f64) -> f64 {
    let n = theta.len();
    let mut m = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for o in data.observations() {
        clamped_grad_into(o.x.coords(), theta, gamma, d_far, &mut g);
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] += g[i] * g[j];
            }
        }
    }
    let trace: f64 = (0..n).map(|i| m[i * n + i]).sum();
    if trace <= 0.0 {
        return 0.0;
    }
    determinant(&mut m, n) / (trace / n as f64).powi(n as i32)
}

fn determinant(m: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a * n + c].abs().total_cmp(&m[b * n + c].abs())).unwrap();
        if m[p * n + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..n {
                m.swap(p * n + k, c * n + k);
            }
            det = -det;
        }
        det *= m[c * n + c];
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for k in c..n {
                m[r * n + k] -= f * m[c * n + k];
            }
        }
    }
    det
}

/// Below this information ratio θ is declared non-identifiable.
const IDENTIFIABILITY_FLOOR: f64 = 1e-10;

/// Multi-start maximum likelihood under the clamped pathloss model with
/// known P0 and γ.
pub fn mle_estimate(data: &Dataset, spec: &EstimatorSpec, ctx: &FitContext) -> Result<EstimateReport> {
    let started = Instant::now();
    check_common(data, spec, ctx)?;
    let dim = data.dim();
    let unit = spec.theta_unit_m;
    let starts: Vec<Vec<f64>> = match &spec.init {
        Some(init) => vec![init.theta.coords().to_vec()],
        None => {
            let mut r = crate::rng::stream(spec.seed, &[0x6d6c_6500]);
            strongest_observations(data, spec.n_starts)
                .into_iter()
                .map(|p| {
                    use rand::Rng as _;
                    p.coords().iter().map(|c| c + r.random_range(-2.0 * ctx.d_far..=2.0 * ctx.d_far)).collect()
                })
                .collect()
        }
    };
    let mut best: Option<(AdamRun, Vec<f64>)> = None;
    let mut last_err = None;
    for start in starts {
        let problem = Problem {
            data,
            d_far: ctx.d_far,
            gamma: ctx.gamma,
            p0_fixed: spec.init.as_ref().map_or(ctx.p0, |i| i.p0),
            theta_ref: start,
            theta_unit: vec![unit; dim],
            theta_free: true,
            p0_free: false,
            net: None,
            beta: 0.0,
            dim,
        };
        match run_adam(&problem, vec![0.0; dim], spec.epochs, spec.lr, 1.0) {
            Ok(run) => {
                let theta = problem.theta(&run.z);
                // strict `<` keeps the earliest start on ties
                if best.as_ref().is_none_or(|(b, _)| run.cost < b.cost) {
                    best = Some((run, theta));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((run, theta)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Diverged("no start converged".into())));
    };
    let identifiable = information_ratio(data, &theta, ctx.gamma, ctx.d_far) > IDENTIFIABILITY_FLOOR;
    let stop = if identifiable { run.stop } else { StopReason::NonIdentifiable };
    Ok(EstimateReport {
        estimator: EstimatorKind::MlePathloss,
        theta_hat: Position::new(theta)?,
        p0_hat: None,
        phi_hat: None,
        final_cost: run.cost,
        converged: identifiable,
        stop_reason: stop,
        iterations: run.iterations,
        cost_trace: run.trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Empirical-risk fit of the APBM family (and its PL-only / NN-only ablations).
pub fn apbm_fit(data: &Dataset, spec: &EstimatorSpec, ctx: &FitContext) -> Result<EstimateReport> {
    let started = Instant::now();
    check_common(data, spec, ctx)?;
    if spec.kind == EstimatorKind::MlePathloss {
        return Err(Error::InvalidParameter("use mle_estimate for the pathloss MLE".into()));
    }
    let dim = data.dim();
    let theta_start: Vec<f64> = match &spec.init {
        Some(init) => init.theta.coords().to_vec(),
        None => strongest_observations(data, 1)[0].coords().to_vec(),
    };
    let p0_start = spec.init.as_ref().map_or(ctx.p0, |i| i.p0)
        + if spec.kind == EstimatorKind::ApbmP0Blind { spec.p0_init_offset_db } else { 0.0 };
    let theta_unit = vec![spec.theta_unit_m; dim];
    let scaling = match spec.input_scaling {
        ScalingMode::Area => ctx.scaling.clone(),
        ScalingMode::Observations => observation_scaling(data),
    };
    let mut sizes = vec![dim];
    sizes.extend_from_slice(&spec.hidden);
    sizes.push(1);

    let starts = spec.n_starts.min(data.len());
    let start_points: Vec<Vec<f64>> = if spec.init.is_some() || starts == 1 {
        vec![theta_start]
    } else {
        strongest_observations(data, starts).into_iter().map(|p| p.coords().to_vec()).collect()
    };

    let mut best: Option<(AdamRun, Problem<'_>)> = None;
    let mut last_err = None;
    for (si, theta_ref) in start_points.into_iter().enumerate() {
        let net = if spec.kind.uses_network() {
            Some(MlpParams::init_uniform(
                sizes.clone(),
                scaling.clone(),
                crate::rng::derive_seed(spec.seed, &[si as u64]),
            )?)
        } else {
            None
        };
        let problem = Problem {
            data,
            d_far: ctx.d_far,
            gamma: ctx.gamma,
            p0_fixed: p0_start,
            theta_ref,
            theta_unit: theta_unit.clone(),
            theta_free: spec.kind.uses_pathloss(),
            p0_free: spec.kind == EstimatorKind::ApbmP0Blind,
            net,
            beta: spec.beta,
            dim,
        };
        let mut z0 = vec![0.0; problem.len()];
        if problem.p0_free {
            z0[problem.p0_index()] = p0_start;
        }
        if let Some(net) = &problem.net {
            let off = problem.phi_offset();
            z0[off..].copy_from_slice(net.flat());
        }
        match run_adam(&problem, z0, spec.epochs, spec.lr, spec.phi_lr_scale) {
            Ok(run) => {
                if best.as_ref().is_none_or(|(b, _)| run.cost < b.cost) {
                    best = Some((run, problem));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((run, problem)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Diverged("no start converged".into())));
    };

    let phi_hat = problem.net.as_ref().map(|net| {
        let off = problem.phi_offset();
        MlpParams::from_flat(net.layer_sizes().to_vec(), run.z[off..].to_vec(), scaling.clone())
    });
    let phi_hat = phi_hat.transpose()?;
    let theta_hat = if problem.theta_free {
        problem.theta(&run.z)
    } else {
        let net = phi_hat.as_ref().expect("nn-only has a network");
        field_argmax(net, data, spec, ctx)
    };
    let mut stop = run.stop;
    let mut converged = true;
    if spec.kind == EstimatorKind::PlOnly
        && information_ratio(data, &theta_hat, ctx.gamma, ctx.d_far) <= IDENTIFIABILITY_FLOOR
    {
        stop = StopReason::NonIdentifiable;
        converged = false;
    }
    Ok(EstimateReport {
        estimator: spec.kind,
        theta_hat: Position::new(theta_hat)?,
        p0_hat: problem.p0_free.then(|| problem.p0(&run.z)),
        phi_hat,
        final_cost: run.cost,
        converged,
        stop_reason: stop,
        iterations: run.iterations,
        cost_trace: run.trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn observation_bounds(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let dim = data.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for o in data.observations() {
        for (i, c) in o.x.coords().iter().enumerate() {
            lo[i] = lo[i].min(*c);
            hi[i] = hi[i].max(*c);
        }
    }
    (lo, hi)
}

fn observation_scaling(data: &Dataset) -> InputScaling {
    let (lo, mut hi) = observation_bounds(data);
    // degenerate extents (single observer, collinear set) get a 1 m box
    for (l, h) in lo.iter().zip(hi.iter_mut()) {
        if *h - *l < 1.0 {
            *h = *l + 1.0;
        }
    }
    InputScaling::from_bounds(&lo, &hi)
}

/// Arg-max of the learned field over the observer positions or a regular
/// grid (grids are 2-D only; other dimensions use the observers).
fn field_argmax(net: &MlpParams, data: &Dataset, spec: &EstimatorSpec, ctx: &FitContext) -> Vec<f64> {
    let mut cache = ForwardCache::new(net.layer_sizes());
    if data.dim() != 2 || spec.argmax_region == ArgmaxRegion::Observers {
        let mut best = (f64::NEG_INFINITY, data.observations()[0].x.coords());
        for o in data.observations() {
            let v = net.forward_cached(net.flat(), o.x.coords(), &mut cache);
            if v > best.0 {
                best = (v, o.x.coords());
            }
        }
        return best.1.to_vec();
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = match spec.argmax_region {
        ArgmaxRegion::Area => (
            ctx.scaling.center.iter().zip(&ctx.scaling.half_extent).map(|(c, h)| c - h).collect(),
            ctx.scaling.center.iter().zip(&ctx.scaling.half_extent).map(|(c, h)| c + h).collect(),
        ),
        ArgmaxRegion::ObservationBox | ArgmaxRegion::Observers => observation_bounds(data),
    };
    let n = spec.argmax_grid;
    let mut best = (f64::NEG_INFINITY, lo.clone());
    for j in 0..n {
        for i in 0..n {
            let p = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
            ];
            let v = net.forward_cached(net.flat(), &p, &mut cache);
            if v > best.0 {
                best = (v, p.to_vec());
            }
        }
    }
    best.1
}

/// Dispatches on `spec.kind`.
pub fn estimate(data: &Dataset, spec: &EstimatorSpec, ctx: &FitContext) -> Result<EstimateReport> {
    match spec.kind {
        EstimatorKind::MlePathloss => mle_estimate(data, spec, ctx),
        _ => apbm_fit(data, spec, ctx),
    }
}
