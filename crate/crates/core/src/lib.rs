//! Crowdsourced jammer localization from received-signal-strength reports.
//!
//! Simulates RSS campaigns under free-space pathloss or 2-D urban ray
//! tracing, localizes the jammer with pathloss MLE and augmented
//! physics-based (pathloss + neural correction) models, and benchmarks them
//! against the Cramér-Rao bound.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod crb;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod field;
pub mod harness;
pub mod nn;
pub mod output;
pub mod raytrace;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use field::{Dataset, JammerParams, Observation, Position, Provenance};
