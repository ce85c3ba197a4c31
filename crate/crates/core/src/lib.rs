//! County-level crop-yield regression from multi-band remote-sensing time series.
//!
//! The pipeline turns per-county raster cubes (8-day composites of surface
//! reflectance, land surface temperature, and weather layers) into compact
//! tabular features, trains regularized second-order gradient-boosted
//! regression trees on them, and evaluates year-by-year with a strict
//! no-future-data walk-forward protocol. Model behaviour is explained with
//! exact per-tree Shapley attributions aggregated into band-by-timeframe
//! importances, and hyperparameters can be searched with a univariate
//! tree-structured Parzen estimator.
//!
//! A seeded synthetic world generator ([`synth`]) produces raster cubes and
//! ground-truth yields with a known signal structure so the whole system can
//! be exercised end to end at desk scale.

pub mod explain;
pub mod features;
pub mod gbrt;
pub mod harness;
pub mod raster;
mod rng_util;
pub mod synth;
pub mod tuner;
