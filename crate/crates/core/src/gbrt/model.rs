//! Model representation and its JSON serialization.

use super::{TrainError, TrainParams};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One node of a regression tree: either a split `{f, t, dl, l, r}` (go left
/// when `x[f] <= t`, missing follows `dl`) or a leaf `{w}` whose weight
/// already includes the learning-rate shrinkage. `c` carries the training
/// cover (row count routed through the node), which Shapley attribution
/// needs; models built by hand may omit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        f: usize,
        t: f64,
        dl: bool,
        l: Box<TreeNode>,
        r: Box<TreeNode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    Leaf {
        w: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
}

impl TreeNode {
    pub fn leaf(w: f64) -> Self {
        TreeNode::Leaf { w, c: None }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn cover(&self) -> Option<f64> {
        match self {
            TreeNode::Split { c, .. } | TreeNode::Leaf { c, .. } => *c,
        }
    }

    /// Tree output for one row; missing features follow the stored default
    /// direction.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { w, .. } => return *w,
                TreeNode::Split { f, t, dl, l, r, .. } => {
                    let v = x[*f];
                    let go_left = if v.is_nan() { *dl } else { v <= *t };
                    node = if go_left { l } else { r };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { l, r, .. } => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { l, r, .. } => l.n_leaves() + r.n_leaves(),
        }
    }

    /// Feature indices used by splits anywhere in this tree.
    pub fn collect_split_features(&self, out: &mut std::collections::BTreeSet<usize>) {
        if let TreeNode::Split { f, l, r, .. } = self {
            out.insert(*f);
            l.collect_split_features(out);
            r.collect_split_features(out);
        }
    }
}

/// Additive tree ensemble: prediction is `base_score` plus the sum of tree
/// outputs in training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub format_version: u32,
    pub base_score: f64,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub params: TrainParams,
    pub trees: Vec<TreeNode>,
}

impl Ensemble {
    pub fn constant(base_score: f64, n_features: usize, feature_names: Vec<String>, params: TrainParams) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            base_score,
            n_features,
            feature_names,
            params,
            trees: Vec::new(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, TrainError> {
        if x.len() != self.n_features {
            return Err(TrainError::WidthMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        // Left-to-right fold keeps prediction exactly additive in trees:
        // predict(E_{k+1}, x) == predict(E_k, x) + tree_{k+1}(x) bitwise.
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.predict(x))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let json = serde_json::to_vec(self).map_err(|e| TrainError::ModelFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        fs::write(path, json).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = fs::read(path).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let model: Ensemble = serde_json::from_slice(&bytes).map_err(|e| TrainError::ModelFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(TrainError::VersionMismatch {
                found: model.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        Ok(model)
    }
}
