//! Regularized second-order gradient-boosted regression trees with
//! approximate (quantile-sketch) split finding, learned missing-value
//! default directions, and deterministic seeded sampling.
//!
//! The loss is squared error, so per-row gradients are `g = prediction -
//! label` and the hessian is identically one. Leaf weights minimize the
//! second-order objective in closed form, `-G / (H + lambda)`, and split
//! quality is the standard regularized gain minus `gamma` per added leaf.

mod model;
mod objective;
mod sketch;
mod train;
mod tree;

pub use model::{Ensemble, TreeNode, MODEL_FORMAT_VERSION};
pub use objective::{gradients, leaf_weight, split_gain, GradientPair};
pub use sketch::propose_candidates;
pub use train::{train, train_batch, TrainHistory};
pub use tree::grow_tree;

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("labels and predictions differ in length: {labels} vs {predictions}")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("label at row {0} is NaN")]
    NanLabel(usize),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature width mismatch: model expects {expected}, input has {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("leaf weight undefined: hessian sum {hess} plus lambda {lambda} is not positive")]
    DegenerateLeaf { hess: f64, lambda: f64 },
    #[error("model file {path}: {reason}")]
    ModelFormat { path: PathBuf, reason: String },
    #[error("unsupported model format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Training hyperparameters. `seed` fixes row/column sampling; identical
/// seed, params, and data give a byte-identical serialized model regardless
/// of worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    /// Learning rate; folded into stored leaf weights.
    pub eta: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Per-leaf penalty subtracted from every split gain.
    pub gamma: f64,
    /// Minimum hessian sum required in each child.
    pub min_child_weight: f64,
    /// Row fraction drawn (without replacement) per tree.
    pub subsample: f64,
    /// Feature fraction drawn per tree.
    pub colsample: f64,
    pub max_rounds: usize,
    /// Rounds without validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Quantile resolution of the split-candidate sketch; roughly `1 /
    /// sketch_eps` thresholds per feature.
    pub sketch_eps: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            eta: 0.3,
            max_depth: 6,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample: 1.0,
            max_rounds: 500,
            early_stop_patience: 25,
            sketch_eps: 0.05,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        fn bad(name: &'static str, reason: String) -> TrainError {
            TrainError::InvalidParam { name, reason }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(bad("eta", format!("{} not in [0, 1]", self.eta)));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(bad("lambda", format!("{} must be >= 0", self.lambda)));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(bad("gamma", format!("{} must be >= 0", self.gamma)));
        }
        if self.min_child_weight < 0.0 {
            return Err(bad(
                "min_child_weight",
                format!("{} must be >= 0", self.min_child_weight),
            ));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(bad("subsample", format!("{} not in (0, 1]", self.subsample)));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return Err(bad("colsample", format!("{} not in (0, 1]", self.colsample)));
        }
        if !(self.sketch_eps > 0.0 && self.sketch_eps < 1.0) {
            return Err(bad("sketch_eps", format!("{} not in (0, 1)", self.sketch_eps)));
        }
        Ok(())
    }
}

/// Dense row-major feature matrix; missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    n_features: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn from_flat(n_rows: usize, n_features: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_rows * n_features);
        Self {
            n_rows,
            n_features,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_features);
        for r in rows {
            assert_eq!(r.len(), n_features);
            values.extend_from_slice(r);
        }
        Self {
            n_rows,
            n_features,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_features + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_features..(row + 1) * self.n_features]
    }
}

/// Feature matrix plus labels, the unit the trainer consumes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: DataMatrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(matrix: DataMatrix, labels: Vec<f64>) -> Self {
        assert_eq!(matrix.n_rows(), labels.len());
        Self { matrix, labels }
    }
}
