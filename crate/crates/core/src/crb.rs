//! Fisher information and Cramér-Rao bounds for pathloss localization with
//! i.i.d. Gaussian shadowing (covariance σ²I, so only the mean term of the
//! Gaussian FIM survives).

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_10;

use crate::error::{Error, Result};
use crate::field::{JammerParams, Position};

/// Central-difference step for [`fim_numeric`], meters.
pub const FIM_FD_STEP_M: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    /// Row-major D×D entries.
    entries: Vec<f64>,
    dim: usize,
    pub theta: Position,
}

impl FisherMatrix {
    fn zeros(theta: &Position) -> Self {
        let dim = theta.dim();
        Self { entries: vec![0.0; dim * dim], dim, theta: theta.clone() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// ‖self − other‖_F / ‖other‖_F.
    pub fn relative_frobenius_error(&self, other: &FisherMatrix) -> f64 {
        let diff: f64 = self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        diff / other.frobenius()
    }

    /// Matrix inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        let scale = self.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for col in 0..n {
            let pivot = (col..n).max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs())).unwrap();
            if a[pivot * n + col].abs() <= 1e-14 * scale {
                return Err(Error::SingularGeometry("Fisher information matrix is singular".into()));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                    inv.swap(pivot * n + k, col * n + k);
                }
            }
            let p = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= p;
                inv[col * n + k] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        a[r * n + k] -= f * a[col * n + k];
                        inv[r * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Diagonal of the inverse: the per-coordinate variance bounds.
    pub fn crb(&self) -> Result<CrbReport> {
        let inv = self.inverse()?;
        let n = self.dim;
        CrbReport::from_variances((0..n).map(|i| inv[i * n + i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    /// m²
    pub per_dimension_variance: Vec<f64>,
    /// m
    pub per_dimension_rmse_bound: Vec<f64>,
}

impl CrbReport {
    fn from_variances(per_dimension_variance: Vec<f64>) -> Result<Self> {
        if per_dimension_variance.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::SingularGeometry(format!("invalid variance bound {per_dimension_variance:?}")));
        }
        let per_dimension_rmse_bound = per_dimension_variance.iter().map(|v| v.sqrt()).collect();
        Ok(Self { per_dimension_variance, per_dimension_rmse_bound })
    }
}

fn check_inputs(observers: &[Position], jp: &JammerParams, sigma: f64) -> Result<()> {
    if observers.is_empty() {
        return Err(Error::Empty("observers"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    jp.validate()?;
    if let Some(x) = observers.iter().find(|x| x.dim() != jp.theta.dim()) {
        return Err(Error::DimensionMismatch { expected: jp.theta.dim(), got: x.dim() });
    }
    Ok(())
}

/// Closed-form FIM of the pathloss model:
/// `100 γ² / (σ² ln²10) · Σ (θ − x)(θ − x)ᵀ / d⁴`.
pub fn fim_pathloss(observers: &[Position], jp: &JammerParams, sigma: f64) -> Result<FisherMatrix> {
    check_inputs(observers, jp, sigma)?;
    let mut fim = FisherMatrix::zeros(&jp.theta);
    let n = fim.dim;
    let theta = jp.theta.coords();
    let mut diff = vec![0.0; n];
    for x in observers {
        for (d, (t, xi)) in diff.iter_mut().zip(theta.iter().zip(x.coords())) {
            *d = t - xi;
        }
        let d2: f64 = diff.iter().map(|v| v * v).sum();
        if d2 == 0.0 {
            return Err(Error::SingularGeometry("observer coincides with the jammer".into()));
        }
        let w = 1.0 / (d2 * d2);
        for i in 0..n {
            for j in 0..n {
                fim.entries[i * n + j] += w * diff[i] * diff[j];
            }
        }
    }
    let k = 100.0 * jp.gamma * jp.gamma / (sigma * sigma * LN_10 * LN_10);
    fim.entries.iter_mut().for_each(|v| *v *= k);
    Ok(fim)
}

/// The sums `a = Σ Δ₁²/d⁴`, `b = Σ Δ₂²/d⁴`, `c = Σ Δ₁Δ₂/d⁴` with `Δ = θ − x`.
pub fn crb_sums_2d(observers: &[Position], theta: &Position) -> Result<(f64, f64, f64)> {
    if theta.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: theta.dim() });
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for x in observers {
        if x.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.dim() });
        }
        let d1 = theta.x() - x.x();
        let d2 = theta.y() - x.y();
        let r2 = d1 * d1 + d2 * d2;
        if r2 == 0.0 {
            return Err(Error::SingularGeometry("observer coincides with the jammer".into()));
        }
        let w = 1.0 / (r2 * r2);
        a += d1 * d1 * w;
        b += d2 * d2 * w;
        c += d1 * d2 * w;
    }
    Ok((a, b, c))
}

/// Closed-form 2-D bound: `σ² ln²10 / (100 γ²) · (b, a) / (ab − c²)`.
pub fn crb_2d(observers: &[Position], jp: &JammerParams, sigma: f64) -> Result<CrbReport> {
    check_inputs(observers, jp, sigma)?;
    let (a, b, c) = crb_sums_2d(observers, &jp.theta)?;
    let det = a * b - c * c;
    if !(det > 1e-12 * a * b) {
        return Err(Error::SingularGeometry(format!("ab - c^2 = {det:e}; observers are collinear with the jammer")));
    }
    let k = sigma * sigma * LN_10 * LN_10 / (100.0 * jp.gamma * jp.gamma);
    CrbReport::from_variances(vec![k * b / det, k * a / det])
}

/// `JᵀJ / σ²` with `J` the central-difference Jacobian of the stacked mean
/// vector at `theta`.
pub fn fim_numeric<F>(mean_fn: F, theta: &Position, sigma: f64) -> Result<FisherMatrix>
where
    F: Fn(&Position) -> Vec<f64>,
{
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let n = theta.dim();
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up.coords_mut()[i] += FIM_FD_STEP_M;
            dn.coords_mut()[i] -= FIM_FD_STEP_M;
            mean_fn(&up).iter().zip(mean_fn(&dn)).map(|(u, d)| (u - d) / (2.0 * FIM_FD_STEP_M)).collect()
        })
        .collect();
    let mut fim = FisherMatrix::zeros(theta);
    for i in 0..n {
        for j in 0..n {
            fim.entries[i * n + j] =
                columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum::<f64>() / (sigma * sigma);
        }
    }
    Ok(fim)
}

/// Stacked pathloss means for a fixed observer set, as a function of θ.
pub fn pathloss_mean_fn<'a>(observers: &'a [Position], jp: &'a JammerParams) -> impl Fn(&Position) -> Vec<f64> + 'a {
    move |theta: &Position| {
        observers
            .iter()
            .map(|x| {
                crate::field::rss_at_distance(
                    crate::field::distance_unchecked(x.coords(), theta.coords()),
                    jp.p0,
                    jp.gamma,
                )
            })
            .collect()
    }
}
