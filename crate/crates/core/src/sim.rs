//! Synthetic crowdsourced measurement campaigns.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::field::{clamped_rss, Dataset, JammerParams, Observation, Position, Provenance, Selection};
use crate::raytrace::{BuildingMap, RayTracer};
use crate::rng;

const OBSERVER_STREAM: u64 = 0x6f62_7365;
const NOISE_STREAM: u64 = 0x6e6f_6973;
/// Placement attempts per observer before giving up (raytrace regime).
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Axis-aligned box, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Area {
    pub fn square(side: f64) -> Self {
        Self { min: vec![0.0, 0.0], max: vec![side, side] }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_empty() || self.min.len() != self.max.len() {
            return Err(Error::InvalidParameter("area bounds must have equal, non-zero dimension".into()));
        }
        if self.min.iter().zip(&self.max).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidParameter("area must have positive measure".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.dim() == self.dim()
            && p.coords().iter().zip(self.min.iter().zip(&self.max)).all(|(c, (lo, hi))| c >= lo && c <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn half_extent(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (b - a)).collect()
    }

    pub fn measure(&self) -> f64 {
        self.min.iter().zip(&self.max).map(|(a, b)| b - a).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    Pathloss,
    Raytrace(BuildingMap),
}

impl Regime {
    pub fn provenance(&self) -> Provenance {
        match self {
            Regime::Pathloss => Provenance::Pathloss,
            Regime::Raytrace(_) => Provenance::Raytrace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub jammer: JammerParams,
    pub area: Area,
    pub n_samples: usize,
    pub top_k: usize,
    pub inr_db: f64,
    pub regime: Regime,
    pub d_far: f64,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    /// Open-sky campaign: 10 dBW jammer at the centre of a 1 km square,
    /// 10 000 observers, strongest 15 kept.
    pub fn open_sky(inr_db: f64) -> Self {
        Self {
            jammer: JammerParams { theta: Position::xy(500.0, 500.0), p0: 10.0, gamma: 2.0 },
            area: Area::square(1000.0),
            n_samples: 10_000,
            top_k: 15,
            inr_db,
            regime: Regime::Pathloss,
            d_far: crate::field::DEFAULT_FAR_FIELD_M,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.jammer.validate()?;
        self.area.validate()?;
        if self.jammer.theta.dim() != self.area.dim() {
            return Err(Error::DimensionMismatch { expected: self.area.dim(), got: self.jammer.theta.dim() });
        }
        if !self.area.contains(&self.jammer.theta) {
            return Err(Error::InvalidParameter("jammer must lie inside the area".into()));
        }
        if self.top_k == 0 || self.top_k > self.n_samples {
            return Err(Error::InvalidParameter(format!(
                "top_k must be in 1..={}, got {}",
                self.n_samples, self.top_k
            )));
        }
        if !(self.d_far > 0.0) {
            return Err(Error::InvalidParameter("far-field distance must be positive".into()));
        }
        if self.inr_db.is_nan() {
            return Err(Error::InvalidParameter("INR must not be NaN".into()));
        }
        if let Regime::Raytrace(map) = &self.regime {
            if self.area.dim() != 2 {
                return Err(Error::InvalidParameter("ray tracing needs a 2-D area".into()));
            }
            map.validate()?;
            if let Some(i) = map.building_at([self.jammer.theta.x(), self.jammer.theta.y()]) {
                return Err(Error::InsideBuilding(i));
            }
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        sigma_from_inr(self.jammer.p0, self.inr_db)
    }
}

/// Noise standard deviation (dB) giving `inr_db = 10 log10(P0 / σ²)`.
pub fn sigma_from_inr(p0_dbw: f64, inr_db: f64) -> f64 {
    10f64.powf((p0_dbw - inr_db) / 20.0)
}

pub fn inr_from_sigma(p0_dbw: f64, sigma: f64) -> f64 {
    p0_dbw - 20.0 * sigma.log10()
}

/// Noiseless received-power model of a scenario.
#[derive(Debug, Clone)]
pub enum FieldModel {
    Pathloss { jammer: JammerParams, d_far: f64 },
    Raytrace(Box<RayTracer>),
}

impl FieldModel {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(match &cfg.regime {
            Regime::Pathloss => FieldModel::Pathloss { jammer: cfg.jammer.clone(), d_far: cfg.d_far },
            Regime::Raytrace(map) => {
                FieldModel::Raytrace(Box::new(RayTracer::new(map, &cfg.jammer)?.with_min_path(cfg.d_far)))
            }
        })
    }

    pub fn rss(&self, x: &Position) -> Result<f64> {
        match self {
            FieldModel::Pathloss { jammer, d_far } => clamped_rss(x, jammer, *d_far),
            FieldModel::Raytrace(t) => t.rss([x.x(), x.y()]),
        }
    }
}

fn place_observer(cfg: &ScenarioConfig, index: usize, seed: u64) -> Result<Position> {
    let mut r = rng::stream(seed, &[OBSERVER_STREAM, index as u64]);
    let map = match &cfg.regime {
        Regime::Raytrace(map) if !map.polygons.is_empty() => Some(map),
        _ => None,
    };
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let coords: Vec<f64> =
            cfg.area.min.iter().zip(&cfg.area.max).map(|(lo, hi)| r.random_range(*lo..*hi)).collect();
        match map {
            Some(m) if m.building_at([coords[0], coords[1]]).is_some() => continue,
            _ => return Ok(Position::new(coords).expect("finite area")),
        }
    }
    Err(Error::RejectionExhausted(MAX_PLACEMENT_ATTEMPTS))
}

/// Uniform observer positions over the area, avoiding building interiors.
/// Observer `i` draws from its own stream, so the result does not depend on `mode`.
pub fn sample_observers(cfg: &ScenarioConfig, mode: ExecMode) -> Result<Vec<Position>> {
    cfg.validate()?;
    map_indexed(mode, cfg.n_samples, |i| place_observer(cfg, i, cfg.rng_seed)).into_iter().collect()
}

/// Simulates one campaign and keeps the `top_k` strongest measurements.
pub fn generate_dataset(cfg: &ScenarioConfig, mode: ExecMode) -> Result<Dataset> {
    cfg.validate()?;
    let model = FieldModel::new(cfg)?;
    let sigma = cfg.sigma();
    let seed = cfg.rng_seed;
    let noise_dist = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let draws: Vec<(Position, f64)> = map_indexed(mode, cfg.n_samples, |i| {
        let x = place_observer(cfg, i, seed)?;
        let mut nr = rng::stream(seed, &[NOISE_STREAM, i as u64]);
        Ok((x, noise_dist.map_or(0.0, |n| n.sample(&mut nr))))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let values: Vec<f64> = map_indexed(mode, draws.len(), |i| {
        let (x, noise) = &draws[i];
        let clean = match &model {
            FieldModel::Pathloss { jammer, d_far } => clamped_rss(x, jammer, *d_far)?,
            FieldModel::Raytrace(t) => t.rss_unchecked([x.x(), x.y()]),
        };
        Ok(clean + noise)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut ranked: Vec<(usize, f64)> = values.into_iter().enumerate().collect();
    // descending value; ties keep observer index order
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.top_k);

    let observations = ranked.iter().map(|&(i, y)| Observation { x: draws[i].0.clone(), y }).collect();
    Ok(Dataset::new(observations, sigma, cfg.regime.provenance())?
        .with_selection(Selection { pool_size: draws.len(), indices: ranked.iter().map(|r| r.0).collect() }))
}

/// Noiseless power on a regular `nx × ny` grid over a 2-D area, row-major from `area.min`.
pub fn field_grid(cfg: &ScenarioConfig, nx: usize, ny: usize, mode: ExecMode) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.area.dim() != 2 || nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter("field grid needs a 2-D area and at least 2x2 cells".into()));
    }
    let model = FieldModel::new(cfg)?;
    let (x0, y0) = (cfg.area.min[0], cfg.area.min[1]);
    let dx = (cfg.area.max[0] - x0) / (nx - 1) as f64;
    let dy = (cfg.area.max[1] - y0) / (ny - 1) as f64;
    Ok(map_indexed(mode, nx * ny, |k| {
        let (i, j) = (k % nx, k / nx);
        let p = [x0 + i as f64 * dx, y0 + j as f64 * dy];
        match &model {
            FieldModel::Pathloss { jammer, d_far } => {
                clamped_rss(&Position::xy(p[0], p[1]), jammer, *d_far).unwrap_or(f64::NAN)
            }
            FieldModel::Raytrace(t) => t.rss(p).unwrap_or(f64::NAN),
        }
    }))
}
