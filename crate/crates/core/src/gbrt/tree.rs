//! Tree growing: per-feature pre-sorted blocks, per-tree candidate
//! proposal, binned gradient histograms, and recursive best-gain splitting.
//!
//! Determinism contract: every per-feature quantity is accumulated by a
//! single task scanning rows in ascending index order, and the cross-feature
//! argmax breaks ties toward the lowest feature index, then the lowest
//! threshold. Results are therefore independent of worker count.

use super::model::TreeNode;
use super::objective::{leaf_weight, split_gain, GradientPair};
use super::sketch::candidates_unit_sorted;
use super::{DataMatrix, TrainError, TrainParams};
use rayon::prelude::*;

/// Features per histogram-accumulation chunk; fixed so the chunk partition
/// (and with it every floating-point sum) is schedule-independent.
const FEATURE_CHUNK: usize = 64;

/// Per-feature blocks: row ids sorted ascending by feature value with row id
/// as the tie-breaker, plus the values themselves in the same order so node
/// scans never touch the row-major matrix. Rows with a missing value are
/// left out.
pub(crate) struct FeatureBlocks {
    sorted_rows: Vec<Vec<u32>>,
    sorted_vals: Vec<Vec<f64>>,
}

impl FeatureBlocks {
    pub(crate) fn build(data: &DataMatrix) -> Self {
        let columns: Vec<(Vec<u32>, Vec<f64>)> = (0..data.n_features())
            .into_par_iter()
            .map(|f| {
                let mut pairs: Vec<(f64, u32)> = (0..data.n_rows() as u32)
                    .filter_map(|r| {
                        let v = data.get(r as usize, f);
                        (!v.is_nan()).then_some((v, r))
                    })
                    .collect();
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                (
                    pairs.iter().map(|p| p.1).collect(),
                    pairs.iter().map(|p| p.0).collect(),
                )
            })
            .collect();
        let mut sorted_rows = Vec::with_capacity(columns.len());
        let mut sorted_vals = Vec::with_capacity(columns.len());
        for (rows, vals) in columns {
            sorted_rows.push(rows);
            sorted_vals.push(vals);
        }
        Self {
            sorted_rows,
            sorted_vals,
        }
    }
}

struct Hist {
    g: Vec<f64>,
    h: Vec<f64>,
}

impl Hist {
    fn zeros(slots: usize) -> Self {
        Self {
            g: vec![0.0; slots],
            h: vec![0.0; slots],
        }
    }

    fn subtract_from(&self, parent: &Hist) -> Hist {
        Hist {
            g: parent.g.iter().zip(&self.g).map(|(p, s)| p - s).collect(),
            h: parent.h.iter().zip(&self.h).map(|(p, s)| p - s).collect(),
        }
    }
}

struct BestSplit {
    gain: f64,
    feat_local: usize,
    cand_index: usize,
    threshold: f64,
    default_left: bool,
}

/// Per-tree growing state over the sampled rows and features.
///
/// Bin layout per feature: slot 0 holds missing rows, slots `1..=k` hold
/// values up to each candidate threshold in ascending order, slot `k + 1`
/// holds values above every threshold.
struct Grower<'a> {
    params: &'a TrainParams,
    feat_ids: &'a [u32],
    n_local: usize,
    candidates: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    binned: Vec<u16>,
    g: Vec<f64>,
    h: Vec<f64>,
}

impl<'a> Grower<'a> {
    fn new(
        data: &DataMatrix,
        blocks: &FeatureBlocks,
        rows: &[u32],
        feat_ids: &'a [u32],
        grads: &[GradientPair],
        params: &'a TrainParams,
    ) -> Self {
        let n_local = rows.len();
        let p_local = feat_ids.len();

        let mut local_of_global = vec![u32::MAX; data.n_rows()];
        for (li, &r) in rows.iter().enumerate() {
            local_of_global[r as usize] = li as u32;
        }
        let g: Vec<f64> = rows.iter().map(|&r| grads[r as usize].g).collect();
        let h: Vec<f64> = rows.iter().map(|&r| grads[r as usize].h).collect();

        // Column-major bins; 0 marks missing, so a plain zero-fill seeds
        // every row as missing until its value is seen in the sorted walk.
        let mut binned = vec![0u16; p_local * n_local];
        let candidates: Vec<Vec<f64>> = binned
            .par_chunks_mut(n_local.max(1))
            .enumerate()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(vals, locs), (fi, column)| {
                    let fid = feat_ids[fi] as usize;
                    vals.clear();
                    locs.clear();
                    for (&r, &v) in blocks.sorted_rows[fid].iter().zip(&blocks.sorted_vals[fid]) {
                        let li = local_of_global[r as usize];
                        if li != u32::MAX {
                            locs.push(li);
                            vals.push(v);
                        }
                    }
                    // Squared error has unit hessians; the fast path is
                    // exactly equivalent to the weighted proposal with h = 1.
                    let cands = candidates_unit_sorted(vals, params.sketch_eps);
                    assert!(
                        cands.len() + 2 <= u16::MAX as usize,
                        "sketch_eps {} yields {} candidates; bins are u16-indexed",
                        params.sketch_eps,
                        cands.len()
                    );
                    let mut ci = 0usize;
                    for (&li, &v) in locs.iter().zip(vals.iter()) {
                        while ci < cands.len() && v > cands[ci] {
                            ci += 1;
                        }
                        column[li as usize] = (ci + 1) as u16;
                    }
                    cands
                },
            )
            .collect();

        let mut offsets = Vec::with_capacity(p_local + 1);
        let mut total = 0usize;
        for c in &candidates {
            offsets.push(total);
            total += c.len() + 2;
        }
        offsets.push(total);

        Self {
            params,
            feat_ids,
            n_local,
            candidates,
            offsets,
            binned,
            g,
            h,
        }
    }

    fn total_slots(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn column(&self, fi: usize) -> &[u16] {
        &self.binned[fi * self.n_local..(fi + 1) * self.n_local]
    }

    fn build_hist(&self, rows_node: &[u32]) -> Hist {
        let p_local = self.feat_ids.len();
        let chunk_bounds: Vec<(usize, usize)> = (0..p_local)
            .step_by(FEATURE_CHUNK)
            .map(|start| (start, (start + FEATURE_CHUNK).min(p_local)))
            .collect();
        let partials: Vec<(usize, Vec<f64>, Vec<f64>)> = chunk_bounds
            .par_iter()
            .map(|&(f0, f1)| {
                let base = self.offsets[f0];
                let len = self.offsets[f1] - base;
                let mut g = vec![0.0f64; len];
                let mut h = vec![0.0f64; len];
                for fi in f0..f1 {
                    let off = self.offsets[fi] - base;
                    let column = self.column(fi);
                    for &r in rows_node {
                        let slot = off + column[r as usize] as usize;
                        g[slot] += self.g[r as usize];
                        h[slot] += self.h[r as usize];
                    }
                }
                (base, g, h)
            })
            .collect();
        let mut hist = Hist::zeros(self.total_slots());
        for (base, g, h) in partials {
            hist.g[base..base + g.len()].copy_from_slice(&g);
            hist.h[base..base + h.len()].copy_from_slice(&h);
        }
        hist
    }

    fn find_best_split(&self, hist: &Hist, g_tot: f64, h_tot: f64) -> Option<BestSplit> {
        let mcw = self.params.min_child_weight;
        let lambda = self.params.lambda;
        let gamma = self.params.gamma;
        let mut best: Option<BestSplit> = None;
        for fi in 0..self.feat_ids.len() {
            let cands = &self.candidates[fi];
            if cands.is_empty() {
                continue;
            }
            let off = self.offsets[fi];
            let g_miss = hist.g[off];
            let h_miss = hist.h[off];
            let h_present = h_tot - h_miss;
            let mut gv = 0.0;
            let mut hv = 0.0;
            for (j, &threshold) in cands.iter().enumerate() {
                gv += hist.g[off + j + 1];
                hv += hist.h[off + j + 1];
                // A split must separate the node's present values; routing
                // only missing rows to one side duplicates the partition of
                // an opposite-extreme threshold and breaks tie-break
                // determinism.
                if !(hv > 0.0 && hv < h_present) {
                    continue;
                }

                let child_ok = |hl: f64, hr: f64| hl >= mcw && hr >= mcw && hl > 0.0 && hr > 0.0;
                // Missing rows routed left:
                let (gl_l, hl_l) = (gv + g_miss, hv + h_miss);
                let (gr_l, hr_l) = (g_tot - gl_l, h_tot - hl_l);
                let gain_left = child_ok(hl_l, hr_l)
                    .then(|| split_gain(gl_l, hl_l, gr_l, hr_l, lambda, gamma));
                // Missing rows routed right:
                let (gl_r, hl_r) = (gv, hv);
                let (gr_r, hr_r) = (g_tot - gv, h_tot - hv);
                let gain_right = child_ok(hl_r, hr_r)
                    .then(|| split_gain(gl_r, hl_r, gr_r, hr_r, lambda, gamma));

                let (gain, default_left) = match (gain_left, gain_right) {
                    (Some(a), Some(b)) => {
                        if a >= b {
                            (a, true)
                        } else {
                            (b, false)
                        }
                    }
                    (Some(a), None) => (a, true),
                    (None, Some(b)) => (b, false),
                    (None, None) => continue,
                };
                if !gain.is_finite() {
                    continue;
                }
                // Strict improvement keeps the lowest feature index and
                // lowest threshold on ties.
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feat_local: fi,
                        cand_index: j,
                        threshold,
                        default_left,
                    });
                }
            }
        }
        best
    }

    fn node_sums(&self, rows_node: &[u32]) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for &r in rows_node {
            g += self.g[r as usize];
            h += self.h[r as usize];
        }
        (g, h)
    }

    fn leaf(&self, g_tot: f64, h_tot: f64, cover: f64) -> TreeNode {
        let w = leaf_weight(g_tot, h_tot, self.params.lambda).expect("leaf over non-empty rows");
        TreeNode::Leaf {
            w: self.params.eta * w,
            c: Some(cover),
        }
    }

    fn grow_node(&self, rows_node: Vec<u32>, depth: usize, hist_in: Option<Hist>) -> TreeNode {
        let (g_tot, h_tot) = self.node_sums(&rows_node);
        let cover = rows_node.len() as f64;
        if depth >= self.params.max_depth || rows_node.len() < 2 {
            return self.leaf(g_tot, h_tot, cover);
        }
        let hist = hist_in.unwrap_or_else(|| self.build_hist(&rows_node));
        let best = match self.find_best_split(&hist, g_tot, h_tot) {
            Some(b) if b.gain > 0.0 => b,
            _ => return self.leaf(g_tot, h_tot, cover),
        };

        let column = self.column(best.feat_local);
        let left_bin_max = (best.cand_index + 1) as u16;
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in &rows_node {
            let b = column[r as usize];
            let go_left = if b == 0 {
                best.default_left
            } else {
                b <= left_bin_max
            };
            if go_left {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        drop(rows_node);

        // Children that will themselves be split get histograms; the smaller
        // side is accumulated and the larger derived by subtraction.
        let (left_hist, right_hist) = if depth + 1 < self.params.max_depth {
            if left_rows.len() <= right_rows.len() {
                let lh = self.build_hist(&left_rows);
                let rh = lh.subtract_from(&hist);
                (Some(lh), Some(rh))
            } else {
                let rh = self.build_hist(&right_rows);
                let lh = rh.subtract_from(&hist);
                (Some(lh), Some(rh))
            }
        } else {
            (None, None)
        };
        drop(hist);

        let left = self.grow_node(left_rows, depth + 1, left_hist);
        let right = self.grow_node(right_rows, depth + 1, right_hist);
        TreeNode::Split {
            f: self.feat_ids[best.feat_local] as usize,
            t: best.threshold,
            dl: best.default_left,
            l: Box::new(left),
            r: Box::new(right),
            c: Some(cover),
        }
    }
}

pub(crate) fn grow_with_blocks(
    data: &DataMatrix,
    blocks: &FeatureBlocks,
    rows: &[u32],
    features: &[u32],
    grads: &[GradientPair],
    params: &TrainParams,
) -> TreeNode {
    debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
    let grower = Grower::new(data, blocks, rows, features, grads, params);
    let all_local: Vec<u32> = (0..rows.len() as u32).collect();
    grower.grow_node(all_local, 0, None)
}

/// Grows a single regression tree over the given rows and features.
///
/// Candidate thresholds are proposed once at the root from the supplied rows,
/// each feature is scanned in ascending value order, missing rows take the
/// default direction with higher gain, and recursion stops at `max_depth`,
/// at non-positive best gain, or when a child would violate
/// `min_child_weight`. Leaf weights carry the learning rate folded in.
pub fn grow_tree(
    data: &DataMatrix,
    rows: &[u32],
    features: &[u32],
    grads: &[GradientPair],
    params: &TrainParams,
) -> Result<TreeNode, TrainError> {
    params.validate()?;
    if rows.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if grads.len() != data.n_rows() {
        return Err(TrainError::LengthMismatch {
            labels: grads.len(),
            predictions: data.n_rows(),
        });
    }
    if let Some(&f) = features.iter().find(|&&f| f as usize >= data.n_features()) {
        return Err(TrainError::WidthMismatch {
            expected: data.n_features(),
            found: f as usize,
        });
    }
    let blocks = FeatureBlocks::build(data);
    Ok(grow_with_blocks(data, &blocks, rows, features, grads, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(max_depth: usize, lambda: f64, gamma: f64, eta: f64) -> TrainParams {
        TrainParams {
            eta,
            max_depth,
            lambda,
            gamma,
            min_child_weight: 1.0,
            sketch_eps: 0.01,
            ..TrainParams::default()
        }
    }

    fn four_points() -> (DataMatrix, Vec<GradientPair>) {
        let data = DataMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        // labels [0,0,10,10] at base prediction 0
        let grads = vec![
            GradientPair { g: 0.0, h: 1.0 },
            GradientPair { g: 0.0, h: 1.0 },
            GradientPair { g: -10.0, h: 1.0 },
            GradientPair { g: -10.0, h: 1.0 },
        ];
        (data, grads)
    }

    #[test]
    fn depth_zero_is_a_single_leaf() {
        let (data, grads) = four_points();
        let p = params(0, 1.0, 0.0, 0.5);
        let tree = grow_tree(&data, &[0, 1, 2, 3], &[0], &grads, &p).unwrap();
        match tree {
            TreeNode::Leaf { w, c } => {
                // eta * (-G / (H + lambda)) = 0.5 * (20 / 5)
                assert_eq!(w, 2.0);
                assert_eq!(c, Some(4.0));
            }
            _ => panic!("expected leaf"),
        }
    }

    #[test]
    fn perfect_split_on_four_points() {
        let (data, grads) = four_points();
        let p = params(1, 0.0, 0.0, 1.0);
        let tree = grow_tree(&data, &[0, 1, 2, 3], &[0], &grads, &p).unwrap();
        match &tree {
            TreeNode::Split { f, t, l, r, .. } => {
                assert_eq!(*f, 0);
                assert_eq!(*t, 2.5);
                assert_eq!(**l, TreeNode::Leaf { w: 0.0, c: Some(2.0) });
                assert_eq!(**r, TreeNode::Leaf { w: 10.0, c: Some(2.0) });
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn large_gamma_suppresses_all_splits() {
        let (data, grads) = four_points();
        let p = params(3, 0.0, 100.0, 1.0);
        let tree = grow_tree(&data, &[0, 1, 2, 3], &[0], &grads, &p).unwrap();
        assert!(tree.is_leaf());
    }

    #[test]
    fn missing_rows_learn_the_profitable_default_direction() {
        let data = DataMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![f64::NAN]]);
        let grads = vec![
            GradientPair { g: 0.0, h: 1.0 },
            GradientPair { g: 0.0, h: 1.0 },
            GradientPair { g: -10.0, h: 1.0 },
            GradientPair { g: -10.0, h: 1.0 },
        ];
        let p = params(1, 0.0, 0.0, 1.0);
        let tree = grow_tree(&data, &[0, 1, 2, 3], &[0], &grads, &p).unwrap();
        match &tree {
            TreeNode::Split { t, dl, .. } => {
                assert_eq!(*t, 2.5);
                assert!(!dl, "missing rows belong with the high-label side");
            }
            _ => panic!("expected split"),
        }
        assert_eq!(tree.predict(&[f64::NAN]), 10.0);
        assert_eq!(tree.predict(&[1.5]), 0.0);
    }

    #[test]
    fn min_child_weight_blocks_thin_children() {
        let (data, grads) = four_points();
        let mut p = params(1, 0.0, 0.0, 1.0);
        p.min_child_weight = 3.0; // any split leaves a child below 3 rows
        let tree = grow_tree(&data, &[0, 1, 2, 3], &[0], &grads, &p).unwrap();
        assert!(tree.is_leaf());
    }

    #[test]
    fn growing_is_deterministic() {
        let mut rows = Vec::new();
        for i in 0..64u32 {
            let x = (i as f64 * 0.7).sin() * 3.0;
            let z = (i as f64 * 1.3).cos();
            rows.push(vec![x, z]);
        }
        let data = DataMatrix::from_rows(&rows);
        let grads: Vec<GradientPair> = (0..64)
            .map(|i| GradientPair {
                g: ((i * 37) % 11) as f64 - 5.0,
                h: 1.0,
            })
            .collect();
        let p = params(4, 0.5, 0.1, 0.3);
        let ids: Vec<u32> = (0..64).collect();
        let a = grow_tree(&data, &ids, &[0, 1], &grads, &p).unwrap();
        let b = grow_tree(&data, &ids, &[0, 1], &grads, &p).unwrap();
        assert_eq!(a, b);
    }
}
