//! Domain types and the deterministic received-power models.
//!
//! All powers are dBW and all distances meters. `pathloss_rss` is the raw
//! log-distance model; `clamped_rss` saturates the distance at the far-field
//! limit `d_F` so that the model (and any likelihood built on it) stays finite
//! at the jammer location.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_10;

use crate::error::{Error, Result};

/// Default far-field distance, equal to the 1 m pathloss reference distance.
pub const DEFAULT_FAR_FIELD_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Position(Vec<f64>);

impl Position {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("position needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coordinate in {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    fn check_dim(&self, other: &Position) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Position {
    fn from(v: [f64; 2]) -> Self {
        Self(v.to_vec())
    }
}

/// Jammer location plus the two pathloss constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerParams {
    pub theta: Position,
    /// Transmit power referenced to 1 m, dBW.
    pub p0: f64,
    /// Pathloss exponent.
    pub gamma: f64,
}

impl JammerParams {
    pub fn new(theta: Position, p0: f64, gamma: f64) -> Result<Self> {
        let jp = Self { theta, p0, gamma };
        jp.validate()?;
        Ok(jp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.p0.is_finite() {
            return Err(Error::InvalidParameter("p0 must be finite".into()));
        }
        Ok(())
    }

    pub fn with_theta(&self, theta: Position) -> Self {
        Self { theta, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Position,
    /// Measured power, dBW.
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Pathloss,
    Raytrace,
}

/// Which observers of a larger pool survived strongest-first selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub pool_size: usize,
    /// Pool index of each kept observation, in dataset order.
    pub indices: Vec<usize>,
}

/// Ordered set of observations together with the noise level that produced them.
///
/// `sigma` is the noise standard deviation in dB. A value of zero marks a
/// noiseless dataset; likelihood evaluation needs `sigma > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<Observation>,
    sigma: f64,
    provenance: Provenance,
    #[serde(default)]
    selection: Option<Selection>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>, sigma: f64, provenance: Provenance) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
        }
        if let Some(o) = observations.iter().find(|o| !o.y.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite measurement {}", o.y)));
        }
        let dim = observations[0].x.dim();
        if let Some(o) = observations.iter().find(|o| o.x.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: o.x.dim() });
        }
        Ok(Self { observations, sigma, provenance, selection: None })
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = Some(selection);
        self
    }

    pub fn selection(&self) -> Option<&Selection> {
        self.selection.as_ref()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.observations[0].x.dim()
    }

    pub fn positions(&self) -> Vec<Position> {
        self.observations.iter().map(|o| o.x.clone()).collect()
    }
}

pub fn distance(x: &Position, theta: &Position) -> Result<f64> {
    x.check_dim(theta)?;
    Ok(distance_unchecked(x.coords(), theta.coords()))
}

#[inline]
pub(crate) fn distance_unchecked(x: &[f64], theta: &[f64]) -> f64 {
    x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn rss_at_distance(d: f64, p0: f64, gamma: f64) -> f64 {
    p0 - gamma * 10.0 * d.log10()
}

/// Raw log-distance model `P0 - 10 γ log10 d`. Singular at `d = 0`.
pub fn pathloss_rss(x: &Position, jp: &JammerParams) -> Result<f64> {
    let d = distance(x, &jp.theta)?;
    if d == 0.0 {
        return Err(Error::SingularDistance);
    }
    Ok(rss_at_distance(d, jp.p0, jp.gamma))
}

/// Pathloss with the distance clamped from below at the far-field distance.
pub fn clamped_rss(x: &Position, jp: &JammerParams, d_far: f64) -> Result<f64> {
    check_far_field(d_far)?;
    let d = distance(x, &jp.theta)?;
    Ok(rss_at_distance(d.max(d_far), jp.p0, jp.gamma))
}

/// Gradient of [`clamped_rss`] with respect to the jammer position.
///
/// Zero strictly inside the clamp region. On the boundary `d = d_F` the
/// far-field branch derivative is returned.
pub fn clamped_rss_grad_theta(x: &Position, jp: &JammerParams, d_far: f64) -> Result<Vec<f64>> {
    check_far_field(d_far)?;
    x.check_dim(&jp.theta)?;
    let mut grad = vec![0.0; x.dim()];
    clamped_grad_into(x.coords(), jp.theta.coords(), jp.gamma, d_far, &mut grad);
    Ok(grad)
}

/// Writes d f̄ / d θ into `out`; returns the clamped distance.
#[inline]
pub(crate) fn clamped_grad_into(x: &[f64], theta: &[f64], gamma: f64, d_far: f64, out: &mut [f64]) -> f64 {
    let d2: f64 = x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = d2.sqrt();
    if d < d_far {
        out.iter_mut().for_each(|g| *g = 0.0);
        return d_far;
    }
    let k = -10.0 * gamma / (LN_10 * d2);
    for ((g, xi), ti) in out.iter_mut().zip(x).zip(theta) {
        *g = k * (ti - xi);
    }
    d
}

fn check_far_field(d_far: f64) -> Result<()> {
    if !(d_far > 0.0) || !d_far.is_finite() {
        return Err(Error::InvalidParameter(format!("far-field distance must be positive, got {d_far}")));
    }
    Ok(())
}
