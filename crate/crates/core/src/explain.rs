//! Exact per-tree Shapley attribution under path-dependent conditional
//! expectations, and aggregation of per-feature attributions into band and
//! timeframe importance groups.
//!
//! The per-tree algorithm walks every root-to-leaf path once, maintaining the
//! polynomial of subset weights along the path (extend/unwind), so it is
//! polynomial time yet matches brute-force Shapley enumeration exactly. A
//! feature out of the coalition follows both branches weighted by the
//! training cover recorded on each node; a feature in the coalition follows
//! the sample's own branch.

use crate::features::{FeatureLayout, HANDCRAFTED_COUNT, HANDCRAFTED_NAMES};
use crate::gbrt::{DataMatrix, Ensemble, TreeNode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("feature width mismatch: model expects {expected}, input has {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("model lacks node cover statistics required for attribution")]
    MissingCover,
    #[error("node cover statistics are not positive")]
    InvalidCover,
    #[error("grouping does not partition the feature index set: {0}")]
    BadGrouping(String),
    #[error("empty dataset")]
    EmptyDataset,
}

/// Per-feature attributions for one sample. `base_value` plus the sum of
/// `phi` reproduces the model prediction.
#[derive(Debug, Clone)]
pub struct ShapAttribution {
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub prediction: f64,
}

/// One aggregated importance: the mean over a dataset of the summed absolute
/// attributions of the group's features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceGroup {
    pub group: String,
    pub importance: f64,
}

/// Named, disjoint, exhaustive grouping of feature indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureGrouping {
    pub groups: Vec<GroupSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group: String,
    pub indices: Vec<usize>,
}

impl FeatureGrouping {
    /// Checks that the groups partition `0..n_features`.
    pub fn validate(&self, n_features: usize) -> Result<(), ExplainError> {
        let mut seen = vec![false; n_features];
        for g in &self.groups {
            for &i in &g.indices {
                if i >= n_features {
                    return Err(ExplainError::BadGrouping(format!(
                        "group {:?} references feature {} beyond width {}",
                        g.group, i, n_features
                    )));
                }
                if seen[i] {
                    return Err(ExplainError::BadGrouping(format!(
                        "feature {i} appears in more than one group"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(ExplainError::BadGrouping(format!(
                "feature {missing} is not covered by any group"
            )));
        }
        Ok(())
    }
}

/// Growth-period label for a composite start day. Composites from before the
/// first frame boundary fold into the first frame.
pub fn timeframe_of(start_day: u16) -> &'static str {
    if start_day <= 161 {
        "Early Crop Development"
    } else if start_day <= 241 {
        "Final Crop Development"
    } else {
        "Crop Harvest"
    }
}

/// Label used for a band-by-timeframe group.
pub fn band_timeframe_label(band_name: &str, timeframe: &str) -> String {
    format!("{band_name} / {timeframe}")
}

/// The default grouping: every band crossed with the three growth
/// timeframes (by composite start day), plus one singleton group per
/// handcrafted feature. Empty band-timeframe combinations are dropped.
pub fn default_grouping(band_names: &[String], start_days: &[u16]) -> FeatureGrouping {
    let layout = FeatureLayout::new(band_names.len(), start_days.len());
    let frames = ["Early Crop Development", "Final Crop Development", "Crop Harvest"];
    let mut groups = Vec::new();
    for (b, band) in band_names.iter().enumerate() {
        for frame in frames {
            let mut indices = Vec::new();
            for (t, &day) in start_days.iter().enumerate() {
                if timeframe_of(day) == frame {
                    for s in 0..3 {
                        indices.push(layout.index(t, b, s));
                    }
                }
            }
            if !indices.is_empty() {
                groups.push(GroupSpec {
                    group: band_timeframe_label(band, frame),
                    indices,
                });
            }
        }
    }
    for (i, name) in HANDCRAFTED_NAMES.iter().enumerate() {
        groups.push(GroupSpec {
            group: (*name).to_string(),
            indices: vec![layout.rs_len() + i],
        });
    }
    FeatureGrouping { groups }
}

/// Default grouping inferred from a standard-configuration feature width
/// (1129 end-of-year or 634 in-year with the standard 11 bands), assuming
/// composites start on day 49 with the usual 8-day stride.
pub fn infer_standard_grouping(n_features: usize) -> Option<FeatureGrouping> {
    let bands = crate::raster::STANDARD_BAND_NAMES.len();
    let rs = n_features.checked_sub(HANDCRAFTED_COUNT)?;
    if rs % (3 * bands) != 0 {
        return None;
    }
    let t_steps = rs / (3 * bands);
    if t_steps == 0 {
        return None;
    }
    let band_names: Vec<String> = crate::raster::STANDARD_BAND_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let start_days: Vec<u16> = (0..t_steps as u16).map(|k| 49 + 8 * k).collect();
    Some(default_grouping(&band_names, &start_days))
}

fn node_cover(node: &TreeNode) -> Result<f64, ExplainError> {
    let c = node.cover().ok_or(ExplainError::MissingCover)?;
    if c.is_nan() || c <= 0.0 {
        return Err(ExplainError::InvalidCover);
    }
    Ok(c)
}

fn check_covers(node: &TreeNode) -> Result<(), ExplainError> {
    node_cover(node)?;
    if let TreeNode::Split { l, r, .. } = node {
        check_covers(l)?;
        check_covers(r)?;
    }
    Ok(())
}

/// Cover-weighted expectation of a tree: the prediction for a sample about
/// which nothing is known.
fn expectation(node: &TreeNode) -> f64 {
    match node {
        TreeNode::Leaf { w, .. } => *w,
        TreeNode::Split { l, r, .. } => {
            let cl = l.cover().expect("validated cover");
            let cr = r.cover().expect("validated cover");
            (cl * expectation(l) + cr * expectation(r)) / (cl + cr)
        }
    }
}

#[derive(Debug, Clone, Default)]
struct PathItem {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(
    path: &mut [PathItem],
    depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    path[depth] = PathItem {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind_path(path: &mut [PathItem], depth: usize, index: usize) {
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one_portion = path[depth].pweight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion =
                tmp - path[i].pweight * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight =
                path[i].pweight * (depth + 1) as f64 / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathItem], depth: usize, index: usize) -> f64 {
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one_portion = path[depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero_fraction * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight / (zero_fraction * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

#[allow(clippy::too_many_arguments)]
fn shap_recurse(
    node: &TreeNode,
    x: &[f64],
    phi: &mut [f64],
    path: &mut [PathItem],
    depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature: Option<usize>,
) {
    extend_path(path, depth, parent_zero_fraction, parent_one_fraction, parent_feature);
    let mut depth = depth;
    match node {
        TreeNode::Leaf { w, .. } => {
            for i in 1..=depth {
                let weight = unwound_path_sum(path, depth, i);
                let item = &path[i];
                phi[item.feature.expect("non-root path item")] +=
                    weight * (item.one_fraction - item.zero_fraction) * w;
            }
        }
        TreeNode::Split { f, t, dl, l, r, .. } => {
            let v = x[*f];
            let go_left = if v.is_nan() { *dl } else { v <= *t };
            let (hot, cold) = if go_left { (l, r) } else { (r, l) };
            let total = l.cover().expect("validated cover") + r.cover().expect("validated cover");
            let hot_zero_fraction = hot.cover().expect("validated cover") / total;
            let cold_zero_fraction = cold.cover().expect("validated cover") / total;

            let mut incoming_zero_fraction = 1.0;
            let mut incoming_one_fraction = 1.0;
            // A repeated feature on the path is unwound and its fractions
            // folded into this occurrence.
            if let Some(i) = (1..=depth).find(|&i| path[i].feature == Some(*f)) {
                incoming_zero_fraction = path[i].zero_fraction;
                incoming_one_fraction = path[i].one_fraction;
                unwind_path(path, depth, i);
                depth -= 1;
            }

            let (parent_path, child_path) = path.split_at_mut(depth + 1);
            child_path[..parent_path.len()].clone_from_slice(parent_path);
            shap_recurse(
                hot,
                x,
                phi,
                child_path,
                depth + 1,
                hot_zero_fraction * incoming_zero_fraction,
                incoming_one_fraction,
                Some(*f),
            );
            child_path[..parent_path.len()].clone_from_slice(parent_path);
            shap_recurse(
                cold,
                x,
                phi,
                child_path,
                depth + 1,
                cold_zero_fraction * incoming_zero_fraction,
                0.0,
                Some(*f),
            );
        }
    }
}

fn tree_phi(tree: &TreeNode, x: &[f64], phi: &mut [f64]) {
    let depth = tree.depth() + 2;
    let mut path = vec![PathItem::default(); depth * (depth + 1) / 2];
    shap_recurse(tree, x, phi, &mut path, 0, 1.0, 1.0, None);
}

/// Exact Shapley attribution of one prediction across all trees.
///
/// `base_value` is the base score plus each tree's cover-weighted root
/// expectation; attributions are additive per tree, and
/// `base_value + sum(phi)` equals the prediction.
pub fn tree_shap(model: &Ensemble, x: &[f64]) -> Result<ShapAttribution, ExplainError> {
    if x.len() != model.n_features {
        return Err(ExplainError::WidthMismatch {
            expected: model.n_features,
            found: x.len(),
        });
    }
    for tree in &model.trees {
        check_covers(tree)?;
    }
    Ok(tree_shap_checked(model, x))
}

fn tree_shap_checked(model: &Ensemble, x: &[f64]) -> ShapAttribution {
    let mut phi = vec![0.0; model.n_features];
    let mut base_value = model.base_score;
    for tree in &model.trees {
        base_value += expectation(tree);
        tree_phi(tree, x, &mut phi);
    }
    let prediction = model.predict(x).expect("width checked");
    ShapAttribution {
        phi,
        base_value,
        prediction,
    }
}

/// Samples per deterministic aggregation chunk.
const SHAP_CHUNK: usize = 256;

/// Attributions for every row of a matrix, in row order.
pub fn shap_for_matrix(
    model: &Ensemble,
    data: &DataMatrix,
) -> Result<Vec<ShapAttribution>, ExplainError> {
    if data.n_features() != model.n_features {
        return Err(ExplainError::WidthMismatch {
            expected: model.n_features,
            found: data.n_features(),
        });
    }
    for tree in &model.trees {
        check_covers(tree)?;
    }
    Ok((0..data.n_rows())
        .into_par_iter()
        .map(|i| tree_shap_checked(model, data.row(i)))
        .collect())
}

/// Mean absolute attribution per feature group over a dataset.
///
/// Groups must partition the model's feature indices; the result is sorted
/// by descending importance with the group label as tie-breaker.
pub fn aggregate_importances(
    model: &Ensemble,
    data: &DataMatrix,
    grouping: &FeatureGrouping,
) -> Result<Vec<ImportanceGroup>, ExplainError> {
    if data.n_rows() == 0 {
        return Err(ExplainError::EmptyDataset);
    }
    grouping.validate(model.n_features)?;
    if data.n_features() != model.n_features {
        return Err(ExplainError::WidthMismatch {
            expected: model.n_features,
            found: data.n_features(),
        });
    }
    for tree in &model.trees {
        check_covers(tree)?;
    }

    let row_ids: Vec<usize> = (0..data.n_rows()).collect();
    let chunk_sums: Vec<Vec<f64>> = row_ids
        .par_chunks(SHAP_CHUNK)
        .map(|chunk| {
            let mut sums = vec![0.0f64; grouping.groups.len()];
            for &i in chunk {
                let attr = tree_shap_checked(model, data.row(i));
                for (gi, g) in grouping.groups.iter().enumerate() {
                    sums[gi] += g.indices.iter().map(|&j| attr.phi[j].abs()).sum::<f64>();
                }
            }
            sums
        })
        .collect();

    let mut totals = vec![0.0f64; grouping.groups.len()];
    for sums in &chunk_sums {
        for (t, s) in totals.iter_mut().zip(sums) {
            *t += s;
        }
    }
    let n = data.n_rows() as f64;
    let mut out: Vec<ImportanceGroup> = grouping
        .groups
        .iter()
        .zip(&totals)
        .map(|(g, &t)| ImportanceGroup {
            group: g.group.clone(),
            importance: t / n,
        })
        .collect();
    out.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then_with(|| a.group.cmp(&b.group))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbrt::{TrainParams, MODEL_FORMAT_VERSION};
    use std::collections::BTreeSet;

    fn leaf(w: f64, c: f64) -> TreeNode {
        TreeNode::Leaf { w, c: Some(c) }
    }

    fn split(f: usize, t: f64, dl: bool, l: TreeNode, r: TreeNode) -> TreeNode {
        let c = l.cover().unwrap() + r.cover().unwrap();
        TreeNode::Split {
            f,
            t,
            dl,
            l: Box::new(l),
            r: Box::new(r),
            c: Some(c),
        }
    }

    fn model_with(trees: Vec<TreeNode>, n_features: usize, base: f64) -> Ensemble {
        Ensemble {
            format_version: MODEL_FORMAT_VERSION,
            base_score: base,
            n_features,
            feature_names: crate::features::feature_column_names(n_features),
            params: TrainParams::default(),
            trees,
        }
    }

    /// Path-dependent conditional expectation of a tree given a feature
    /// coalition: in-coalition features follow the sample, the rest follow
    /// cover fractions at every occurrence.
    fn expectation_given(node: &TreeNode, x: &[f64], coalition: &BTreeSet<usize>) -> f64 {
        match node {
            TreeNode::Leaf { w, .. } => *w,
            TreeNode::Split { f, t, dl, l, r, .. } => {
                if coalition.contains(f) {
                    let v = x[*f];
                    let go_left = if v.is_nan() { *dl } else { v <= *t };
                    if go_left {
                        expectation_given(l, x, coalition)
                    } else {
                        expectation_given(r, x, coalition)
                    }
                } else {
                    let cl = l.cover().unwrap();
                    let cr = r.cover().unwrap();
                    (cl * expectation_given(l, x, coalition)
                        + cr * expectation_given(r, x, coalition))
                        / (cl + cr)
                }
            }
        }
    }

    /// Exponential-time Shapley values over the tree's split features.
    fn brute_force_shapley(tree: &TreeNode, x: &[f64], n_features: usize) -> Vec<f64> {
        let mut features = BTreeSet::new();
        tree.collect_split_features(&mut features);
        let feats: Vec<usize> = features.into_iter().collect();
        let m = feats.len();
        let factorial = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let mut phi = vec![0.0; n_features];
        for (fi, &feature) in feats.iter().enumerate() {
            for subset_bits in 0..(1u32 << m) {
                if subset_bits & (1 << fi) != 0 {
                    continue;
                }
                let mut coalition = BTreeSet::new();
                for (j, &other) in feats.iter().enumerate() {
                    if subset_bits & (1 << j) != 0 {
                        coalition.insert(other);
                    }
                }
                let s = coalition.len();
                let weight = factorial(s) * factorial(m - s - 1) / factorial(m);
                let without = expectation_given(tree, x, &coalition);
                coalition.insert(feature);
                let with = expectation_given(tree, x, &coalition);
                phi[feature] += weight * (with - without);
            }
        }
        phi
    }

    #[test]
    fn empty_ensemble_attributes_nothing() {
        let model = model_with(vec![], 3, 4.5);
        let attr = tree_shap(&model, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(attr.phi, vec![0.0, 0.0, 0.0]);
        assert_eq!(attr.base_value, 4.5);
        assert_eq!(attr.prediction, 4.5);
    }

    #[test]
    fn stump_gives_all_credit_to_its_feature() {
        let tree = split(1, 0.5, false, leaf(-2.0, 30.0), leaf(6.0, 10.0));
        let model = model_with(vec![tree], 3, 1.0);
        let attr = tree_shap(&model, &[9.0, 0.2, 9.0]).unwrap();
        // expectation = (30*-2 + 10*6) / 40 = 0; goes left -> prediction -1
        assert!((attr.base_value - 1.0).abs() < 1e-12);
        assert!((attr.prediction - (-1.0)).abs() < 1e-12);
        assert!((attr.phi[1] - (attr.prediction - attr.base_value)).abs() < 1e-9);
        assert_eq!(attr.phi[0], 0.0);
        assert_eq!(attr.phi[2], 0.0);
    }

    #[test]
    fn depth_two_matches_brute_force() {
        let tree = split(
            0,
            0.0,
            true,
            split(1, 1.0, false, leaf(1.0, 5.0), leaf(2.0, 10.0)),
            split(1, -1.0, true, leaf(-3.0, 7.0), leaf(4.0, 3.0)),
        );
        let model = model_with(vec![tree.clone()], 2, 0.0);
        for x in [[-1.0, 0.5], [2.0, -2.0], [0.0, 1.0], [f64::NAN, 5.0]] {
            let attr = tree_shap(&model, &x).unwrap();
            let oracle = brute_force_shapley(&tree, &x, 2);
            for (a, b) in attr.phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "phi {a} vs oracle {b} at x {x:?}");
            }
            assert!(
                (attr.base_value + attr.phi.iter().sum::<f64>() - attr.prediction).abs() < 1e-9
            );
        }
    }

    #[test]
    fn repeated_feature_on_path_matches_brute_force() {
        // feature 0 appears at two depths on the same path
        let tree = split(
            0,
            0.0,
            true,
            split(0, -1.0, true, leaf(-5.0, 4.0), leaf(-1.0, 6.0)),
            split(1, 0.5, false, leaf(2.0, 5.0), leaf(7.0, 5.0)),
        );
        let model = model_with(vec![tree.clone()], 2, 0.0);
        for x in [[-2.0, 1.0], [-0.5, 0.0], [3.0, 0.7], [3.0, 0.2]] {
            let attr = tree_shap(&model, &x).unwrap();
            let oracle = brute_force_shapley(&tree, &x, 2);
            for (a, b) in attr.phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "phi {a} vs oracle {b} at x {x:?}");
            }
        }
    }

    #[test]
    fn linearity_in_trees() {
        let t1 = split(0, 0.0, true, leaf(1.0, 5.0), leaf(-1.0, 5.0));
        let t2 = split(1, 2.0, false, leaf(0.5, 3.0), leaf(2.5, 7.0));
        let x = [0.5, 1.0];
        let both = tree_shap(&model_with(vec![t1.clone(), t2.clone()], 2, 0.0), &x).unwrap();
        let only1 = tree_shap(&model_with(vec![t1], 2, 0.0), &x).unwrap();
        let only2 = tree_shap(&model_with(vec![t2], 2, 0.0), &x).unwrap();
        for i in 0..2 {
            assert!((both.phi[i] - (only1.phi[i] + only2.phi[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_cover_is_rejected() {
        let tree = TreeNode::Split {
            f: 0,
            t: 0.0,
            dl: true,
            l: Box::new(TreeNode::leaf(1.0)),
            r: Box::new(TreeNode::leaf(-1.0)),
            c: None,
        };
        let model = model_with(vec![tree], 1, 0.0);
        assert!(matches!(
            tree_shap(&model, &[0.0]),
            Err(ExplainError::MissingCover)
        ));
    }

    #[test]
    fn default_grouping_partitions_and_localizes() {
        let band_names: Vec<String> = crate::raster::STANDARD_BAND_NAMES
            .iter()
            .map(|s| s.to_string())
            .collect();
        let start_days: Vec<u16> = (0..34u16).map(|k| 49 + 8 * k).collect();
        let grouping = default_grouping(&band_names, &start_days);
        grouping.validate(1129).unwrap();

        // a stump on a band-2 feature at the step starting day 169 must light
        // up exactly (sur_refl_b03, Final Crop Development)
        let layout = FeatureLayout::new(11, 34);
        let step = start_days.iter().position(|&d| d == 169).unwrap();
        let feat = layout.index(step, 2, 1);
        let tree = split(feat, 0.0, true, leaf(-1.0, 5.0), leaf(1.0, 5.0));
        let model = model_with(vec![tree], 1129, 0.0);
        let data = DataMatrix::from_rows(&[vec![-1.0; 1129], vec![1.0; 1129]]);
        let importances = aggregate_importances(&model, &data, &grouping).unwrap();
        let top = &importances[0];
        assert_eq!(top.group, "sur_refl_b03 / Final Crop Development");
        assert!(top.importance > 0.0);
        for g in &importances[1..] {
            assert_eq!(g.importance, 0.0, "group {} should be silent", g.group);
        }
    }

    #[test]
    fn group_sum_identity() {
        let t1 = split(0, 0.0, true, leaf(1.0, 5.0), leaf(-1.0, 5.0));
        let t2 = split(2, 1.0, false, leaf(0.5, 2.0), leaf(2.5, 8.0));
        let model = model_with(vec![t1, t2], 3, 0.0);
        let data = DataMatrix::from_rows(&[vec![0.5, 1.0, 2.0], vec![-0.5, 0.0, 0.5]]);
        let grouping = FeatureGrouping {
            groups: vec![
                GroupSpec {
                    group: "a".into(),
                    indices: vec![0, 1],
                },
                GroupSpec {
                    group: "b".into(),
                    indices: vec![2],
                },
            ],
        };
        let importances = aggregate_importances(&model, &data, &grouping).unwrap();
        let total: f64 = importances.iter().map(|g| g.importance).sum();
        let mut expected = 0.0;
        for i in 0..2 {
            let attr = tree_shap(&model, data.row(i)).unwrap();
            expected += attr.phi.iter().map(|p| p.abs()).sum::<f64>();
        }
        expected /= 2.0;
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn bad_groupings_are_rejected() {
        let model = model_with(vec![], 3, 0.0);
        let data = DataMatrix::from_rows(&[vec![0.0; 3]]);
        let overlapping = FeatureGrouping {
            groups: vec![
                GroupSpec {
                    group: "a".into(),
                    indices: vec![0, 1],
                },
                GroupSpec {
                    group: "b".into(),
                    indices: vec![1, 2],
                },
            ],
        };
        assert!(matches!(
            aggregate_importances(&model, &data, &overlapping),
            Err(ExplainError::BadGrouping(_))
        ));
        let incomplete = FeatureGrouping {
            groups: vec![GroupSpec {
                group: "a".into(),
                indices: vec![0],
            }],
        };
        assert!(matches!(
            aggregate_importances(&model, &data, &incomplete),
            Err(ExplainError::BadGrouping(_))
        ));
    }

    #[test]
    fn inferred_grouping_covers_both_modes() {
        assert!(infer_standard_grouping(1129).unwrap().validate(1129).is_ok());
        let inyear = infer_standard_grouping(634).unwrap();
        inyear.validate(634).unwrap();
        // no harvest-frame groups before day 201
        assert!(!inyear.groups.iter().any(|g| g.group.contains("Crop Harvest")));
        assert!(infer_standard_grouping(100).is_none());
    }
}
