//! TOML experiment files (schema version 1).
//!
//! ```toml
//! schema_version = 1
//!
//! [scenario]
//! regime = "pathloss"          # or "raytrace"
//! n_samples = 10000
//! top_k = 15
//! inr_db = 20.0                # used by `field`; sweeps override it
//! far_field_m = 1.0
//! area = { min = [0.0, 0.0], max = [1000.0, 1000.0] }
//! jammer = { theta = [500.0, 500.0], p0_dbw = 10.0, gamma = 2.0 }
//!
//! [scenario.buildings]         # raytrace only
//! preset = "urban"             # and/or explicit polygons
//! polygons = [[[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]]]
//! reflection_loss_db = 6.0
//! max_reflections = 4
//!
//! [sweep]
//! inr_grid_db = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
//! n_mc = 100
//! master_seed = 1
//! output_dir = "out"
//!
//! [[estimators]]
//! kind = "apbm"
//! beta = 1.0
//! ```
//!
//! Omitting `[[estimators]]` runs all five variants with default settings.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::field::{JammerParams, Position, DEFAULT_FAR_FIELD_M};
use crate::harness::ExperimentConfig;
use crate::raytrace::{BuildingMap, Polygon, DEFAULT_FLOOR_DBW, DEFAULT_MAX_REFLECTIONS, DEFAULT_REFLECTION_LOSS_DB};
use crate::sim::{Area, Regime, ScenarioConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub estimators: Vec<EstimatorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeName {
    Pathloss,
    Raytrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub regime: RegimeName,
    #[serde(default = "d::n_samples")]
    pub n_samples: usize,
    #[serde(default = "d::top_k")]
    pub top_k: usize,
    #[serde(default = "d::inr")]
    pub inr_db: f64,
    #[serde(default = "d::far_field")]
    pub far_field_m: f64,
    #[serde(default = "d::area")]
    pub area: Area,
    #[serde(default = "d::jammer")]
    pub jammer: JammerSection,
    #[serde(default)]
    pub buildings: Option<BuildingsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerSection {
    pub theta: Vec<f64>,
    pub p0_dbw: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingsSection {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub polygons: Vec<Vec<[f64; 2]>>,
    #[serde(default = "d::loss")]
    pub reflection_loss_db: f64,
    #[serde(default = "d::max_refl")]
    pub max_reflections: usize,
    #[serde(default = "d::floor")]
    pub floor_dbw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "d::inr_grid")]
    pub inr_grid_db: Vec<f64>,
    #[serde(default = "d::n_mc")]
    pub n_mc: usize,
    #[serde(default = "d::seed")]
    pub master_seed: u64,
    #[serde(default = "d::out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Fill the `mean_ms` column (makes results.csv run-dependent).
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            inr_grid_db: d::inr_grid(),
            n_mc: d::n_mc(),
            master_seed: d::seed(),
            output_dir: d::out(),
            workers: None,
            record_timing: false,
        }
    }
}

mod d {
    use super::*;
    pub fn n_samples() -> usize {
        10_000
    }
    pub fn top_k() -> usize {
        15
    }
    pub fn inr() -> f64 {
        20.0
    }
    pub fn far_field() -> f64 {
        DEFAULT_FAR_FIELD_M
    }
    pub fn area() -> Area {
        Area::square(1000.0)
    }
    pub fn jammer() -> JammerSection {
        JammerSection { theta: vec![500.0, 500.0], p0_dbw: 10.0, gamma: 2.0 }
    }
    pub fn loss() -> f64 {
        DEFAULT_REFLECTION_LOSS_DB
    }
    pub fn max_refl() -> usize {
        DEFAULT_MAX_REFLECTIONS
    }
    pub fn floor() -> f64 {
        DEFAULT_FLOOR_DBW
    }
    pub fn inr_grid() -> Vec<f64> {
        (0..=6).map(|i| 5.0 * i as f64).collect()
    }
    pub fn n_mc() -> usize {
        100
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let regime = match s.regime {
            RegimeName::Pathloss => Regime::Pathloss,
            RegimeName::Raytrace => {
                let b = s
                    .buildings
                    .as_ref()
                    .ok_or_else(|| Error::Config("raytrace regime needs [scenario.buildings]".into()))?;
                Regime::Raytrace(b.to_map()?)
            }
        };
        let cfg = ScenarioConfig {
            jammer: JammerParams::new(Position::new(s.jammer.theta.clone())?, s.jammer.p0_dbw, s.jammer.gamma)?,
            area: s.area.clone(),
            n_samples: s.n_samples,
            top_k: s.top_k,
            inr_db: s.inr_db,
            regime,
            d_far: s.far_field_m,
            rng_seed: self.sweep.master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let estimators = if self.estimators.is_empty() { EstimatorSpec::all() } else { self.estimators.clone() };
        let cfg = ExperimentConfig {
            scenario: self.scenario()?,
            estimators,
            inr_grid_db: self.sweep.inr_grid_db.clone(),
            n_mc: self.sweep.n_mc,
            output_dir: self.sweep.output_dir.clone(),
            master_seed: self.sweep.master_seed,
            workers: self.sweep.workers,
            record_timing: self.sweep.record_timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl BuildingsSection {
    pub fn to_map(&self) -> Result<BuildingMap> {
        let mut polygons = match self.preset.as_deref() {
            None => Vec::new(),
            Some("urban") => urban_district()?,
            Some("courtyard") => courtyard_district()?,
            Some(other) => return Err(Error::Config(format!("unknown building preset `{other}`"))),
        };
        for p in &self.polygons {
            polygons.push(Polygon::new(p.clone())?);
        }
        let map = BuildingMap {
            polygons,
            reflection_loss_db: self.reflection_loss_db,
            max_reflections: self.max_reflections,
            floor_dbw: self.floor_dbw,
        };
        map.validate()?;
        Ok(map)
    }
}

/// Street intervals (along one axis) of the preset district.
const URBAN_STREETS_X: [(f64, f64); 5] =
    [(330.0, 342.0), (418.0, 430.0), (496.0, 512.0), (575.0, 587.0), (650.0, 664.0)];
const URBAN_STREETS_Y: [(f64, f64); 5] =
    [(322.0, 334.0), (405.0, 419.0), (540.0, 552.0), (610.0, 624.0), (668.0, 680.0)];
const URBAN_EXTENT: (f64, f64) = (300.0, 700.0);

fn blocks(streets: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut edges = vec![URBAN_EXTENT.0];
    for (a, b) in streets {
        edges.push(*a);
        edges.push(*b);
    }
    edges.push(URBAN_EXTENT.1);
    edges.chunks(2).map(|c| (c[0], c[1])).collect()
}

/// A 6×6 grid of rectangular blocks with irregular streets over the centre
/// of a 1 km square. The default jammer position (500, 500) sits in a
/// north-south street canyon 4 m from the western façade.
pub fn urban_district() -> Result<Vec<Polygon>> {
    let mut out = Vec::new();
    for (x0, x1) in blocks(&URBAN_STREETS_X) {
        for (y0, y1) in blocks(&URBAN_STREETS_Y) {
            out.push(Polygon::rect(x0, y0, x1, y1)?);
        }
    }
    Ok(out)
}

/// Block of the district replaced by the courtyard complex.
const COURTYARD_BLOCK: [f64; 4] = [430.0, 419.0, 496.0, 540.0];
/// Open yard enclosed by the complex; an 8 m gate opens east onto the street.
pub const COURTYARD_YARD: [f64; 4] = [454.0, 478.0, 484.0, 502.0];

/// The preset district with one block rebuilt as four wings around a small
/// yard. Observers inside the yard are few, so most of the strongest
/// measurements of a jammer placed there arrive through the gate or by
/// reflection.
pub fn courtyard_district() -> Result<Vec<Polygon>> {
    let [bx0, by0, bx1, by1] = COURTYARD_BLOCK;
    let [yx0, yy0, yx1, yy1] = COURTYARD_YARD;
    let (gate_lo, gate_hi) = (486.0, 494.0);
    let mut out: Vec<Polygon> = urban_district()?.into_iter().filter(|p| p.vertices()[0] != [bx0, by0]).collect();
    for (x0, y0, x1, y1) in [
        (bx0, by0, yx0, by1),
        (yx0, yy1, bx1, by1),
        (yx0, by0, bx1, yy0),
        (yx1, yy0, bx1, gate_lo),
        (yx1, gate_hi, bx1, yy1),
    ] {
        out.push(Polygon::rect(x0, y0, x1, y1)?);
    }
    Ok(out)
}

/// Centre of the courtyard yard.
pub fn courtyard_center() -> [f64; 2] {
    [0.5 * (COURTYARD_YARD[0] + COURTYARD_YARD[2]), 0.5 * (COURTYARD_YARD[1] + COURTYARD_YARD[3])]
}
