//! Split-candidate proposal: hessian-weighted quantile cut points.

/// Proposes candidate thresholds for one feature.
///
/// Cut points are taken at cumulative-weight steps of `sketch_eps` over the
/// non-missing values (missing means NaN; the matching hessian is ignored).
/// Each threshold is the midpoint between the adjacent distinct sorted values
/// nearest the cut, so with `sketch_eps <= 1/n` over distinct values this
/// degenerates to the full set of `n - 1` midpoints. The result is
/// deduplicated and ascending; a feature without two distinct values yields
/// no candidates.
pub fn propose_candidates(values: &[f64], hessians: &[f64], sketch_eps: f64) -> Vec<f64> {
    assert_eq!(values.len(), hessians.len());
    assert!(sketch_eps > 0.0 && sketch_eps < 1.0);
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(hessians)
        .filter(|(v, _)| !v.is_nan())
        .map(|(&v, &h)| (v, h))
        .collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    candidates_from_sorted(&sorted, Some(&weights), sketch_eps)
}

/// Core of [`propose_candidates`] over an already sorted value column.
/// `weights` of `None` means unit hessians.
pub(crate) fn candidates_from_sorted(
    sorted: &[f64],
    weights: Option<&[f64]>,
    sketch_eps: f64,
) -> Vec<f64> {
    let n = sorted.len();
    if n < 2 {
        return Vec::new();
    }
    // Distinct value groups with cumulative weight at each group's end.
    let mut group_values: Vec<f64> = Vec::new();
    let mut group_cum: Vec<f64> = Vec::new();
    let mut cum = 0.0f64;
    for i in 0..n {
        cum += weights.map_or(1.0, |w| w[i]);
        if i + 1 < n && sorted[i + 1] == sorted[i] {
            continue;
        }
        group_values.push(sorted[i]);
        group_cum.push(cum);
    }
    let n_groups = group_values.len();
    if n_groups < 2 {
        return Vec::new();
    }
    let total = cum;
    if total <= 0.0 {
        return Vec::new();
    }

    // Tolerance keeps exact integer cut levels (unit hessians) from landing
    // one group too high after floating-point accumulation of m * eps * total.
    let fuzz = 1e-9 * total;
    let mut out = Vec::new();
    let mut m = 1u64;
    loop {
        let level = m as f64 * sketch_eps * total;
        if level >= total - fuzz {
            break;
        }
        let g = group_cum.partition_point(|&c| c < level - fuzz);
        let g = g.min(n_groups - 1);
        let threshold = if g + 1 < n_groups {
            0.5 * (group_values[g] + group_values[g + 1])
        } else {
            0.5 * (group_values[g - 1] + group_values[g])
        };
        if out.last() != Some(&threshold) {
            out.push(threshold);
        }
        m += 1;
    }
    out
}

/// Unit-hessian fast path of [`candidates_from_sorted`]: cut positions are
/// computed directly from indices instead of scanning cumulative weights.
/// Must stay exactly equivalent to the general path with unit weights.
pub(crate) fn candidates_unit_sorted(sorted: &[f64], sketch_eps: f64) -> Vec<f64> {
    let n = sorted.len();
    // fewer than two rows, or a single distinct value group
    if n < 2 || sorted[0] == sorted[n - 1] {
        return Vec::new();
    }
    let total = n as f64;
    let fuzz = 1e-9 * total;
    let mut out: Vec<f64> = Vec::new();
    let mut m = 1u64;
    loop {
        let level = m as f64 * sketch_eps * total;
        if level >= total - fuzz {
            break;
        }
        // smallest index with index + 1 >= level - fuzz
        let i = ((level - fuzz).ceil() as usize).max(1) - 1;
        let i = i.min(n - 1);
        let v = sorted[i];
        // end of v's value group
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == v {
            j += 1;
        }
        let threshold = if j + 1 < n {
            0.5 * (v + sorted[j + 1])
        } else {
            // cut landed in the last group: midpoint below it
            let mut k = i;
            while k > 0 && sorted[k - 1] == v {
                k -= 1;
            }
            0.5 * (sorted[k - 1] + v)
        };
        if out.last() != Some(&threshold) {
            out.push(threshold);
        }
        m += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_fast_path_matches_general_path() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for case in 0..200 {
            let n = 2 + (case % 64);
            let mut vals: Vec<f64> = (0..n)
                .map(|_| {
                    // coarse grid forces duplicate values
                    (rng.gen_range(0..40) as f64) * 0.25
                })
                .collect();
            vals.sort_unstable_by(f64::total_cmp);
            for eps in [0.01, 0.05, 1.0 / n as f64, 0.25, 0.5] {
                let general = candidates_from_sorted(&vals, None, eps);
                let fused = candidates_unit_sorted(&vals, eps);
                assert_eq!(general, fused, "n={n} eps={eps} vals={vals:?}");
            }
        }
    }

    #[test]
    fn constant_feature_yields_nothing() {
        assert!(propose_candidates(&[5.0, 5.0, 5.0], &[1.0; 3], 0.1).is_empty());
        assert!(propose_candidates(&[], &[], 0.1).is_empty());
    }

    #[test]
    fn quarter_eps_on_1_to_100() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let h = vec![1.0; 100];
        let cuts = propose_candidates(&values, &h, 0.25);
        assert_eq!(cuts, vec![25.5, 50.5, 75.5]);
    }

    #[test]
    fn tiny_eps_recovers_all_midpoints() {
        let values: Vec<f64> = (0..16).map(|i| i as f64 * 1.5).collect();
        let h = vec![1.0; 16];
        let cuts = propose_candidates(&values, &h, 1.0 / 32.0);
        let expected: Vec<f64> = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        assert_eq!(cuts, expected);
    }

    #[test]
    fn duplicates_collapse_into_groups() {
        // 4 of value 1, 4 of value 2: eps 0.5 cuts once, between the groups
        let values = vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0];
        let cuts = propose_candidates(&values, &vec![1.0; 8], 0.5);
        assert_eq!(cuts, vec![1.5]);
    }

    #[test]
    fn hessian_weights_shift_cuts() {
        // weight concentrated on the last value pulls the median cut right
        let values = vec![1.0, 2.0, 3.0, 4.0];
        let unit = propose_candidates(&values, &vec![1.0; 4], 0.5);
        assert_eq!(unit, vec![2.5]);
        let skewed = propose_candidates(&values, &[0.1, 0.1, 0.1, 10.0], 0.5);
        assert_eq!(skewed, vec![3.5]);
    }

    #[test]
    fn missing_values_are_ignored() {
        let values = vec![f64::NAN, 1.0, f64::NAN, 2.0];
        let cuts = propose_candidates(&values, &vec![1.0; 4], 0.5);
        assert_eq!(cuts, vec![1.5]);
    }

    #[test]
    fn ascending_and_unique() {
        let values: Vec<f64> = (0..250).map(|i| ((i * 7919) % 83) as f64).collect();
        let cuts = propose_candidates(&values, &vec![1.0; 250], 0.03);
        for pair in cuts.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }
}
