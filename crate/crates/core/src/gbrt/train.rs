//! The boosting loop: gradients at the current prediction, seeded row and
//! column sampling, one tree per round, and early stopping on validation
//! RMSE.

use super::model::{Ensemble, TreeNode, MODEL_FORMAT_VERSION};
use super::objective::gradients;
use super::tree::{grow_with_blocks, FeatureBlocks};
use super::{Dataset, TrainError, TrainParams};
use crate::rng_util::sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-round RMSE curves and the round the returned ensemble was truncated
/// at (number of trees kept).
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub train_rmse: Vec<f64>,
    pub valid_rmse: Vec<f64>,
    pub best_round: usize,
}

fn rmse_of(labels: &[f64], preds: &[f64]) -> f64 {
    let n = labels.len() as f64;
    let ss: f64 = labels
        .iter()
        .zip(preds)
        .map(|(y, p)| (p - y) * (p - y))
        .sum();
    (ss / n).sqrt()
}

fn sampled_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Trains an ensemble. `base_score` is the training-label mean; each round
/// recomputes gradients at the current predictions, draws the seeded row
/// subsample and feature column sample, grows one tree, and adds its
/// (shrinkage-folded) outputs to every prediction. With a validation set,
/// training stops once validation RMSE has not improved for
/// `early_stop_patience` rounds and the ensemble is truncated at the best
/// validation round.
///
/// `n_threads` caps the worker pool; any setting produces byte-identical
/// models.
pub fn train(
    train_set: &Dataset,
    valid_set: Option<&Dataset>,
    feature_names: &[String],
    params: &TrainParams,
    n_threads: Option<usize>,
) -> Result<(Ensemble, TrainHistory), TrainError> {
    let mut out = train_batch(train_set, valid_set, feature_names, params, &[params.seed], n_threads)?;
    Ok(out.pop().expect("one seed in, one model out"))
}

/// Trains one model per seed over the same data, sharing the per-feature
/// sorted blocks across runs. Equivalent to calling [`train`] once per seed.
pub fn train_batch(
    train_set: &Dataset,
    valid_set: Option<&Dataset>,
    feature_names: &[String],
    params: &TrainParams,
    seeds: &[u64],
    n_threads: Option<usize>,
) -> Result<Vec<(Ensemble, TrainHistory)>, TrainError> {
    params.validate()?;
    let run = || -> Result<Vec<(Ensemble, TrainHistory)>, TrainError> {
        let blocks = validate_and_build_blocks(train_set, valid_set, feature_names, params)?;
        seeds
            .iter()
            .map(|&seed| {
                let mut p = params.clone();
                p.seed = seed;
                train_inner(train_set, valid_set, feature_names, &p, &blocks)
            })
            .collect()
    };
    match n_threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    }
}

fn validate_and_build_blocks(
    train_set: &Dataset,
    valid_set: Option<&Dataset>,
    feature_names: &[String],
    params: &TrainParams,
) -> Result<FeatureBlocks, TrainError> {
    params.validate()?;
    let n = train_set.matrix.n_rows();
    let p = train_set.matrix.n_features();
    if n == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    if let Some(i) = train_set.labels.iter().position(|l| l.is_nan()) {
        return Err(TrainError::NanLabel(i));
    }
    if let Some(v) = valid_set {
        if v.matrix.n_features() != p {
            return Err(TrainError::WidthMismatch {
                expected: p,
                found: v.matrix.n_features(),
            });
        }
        if let Some(i) = v.labels.iter().position(|l| l.is_nan()) {
            return Err(TrainError::NanLabel(i));
        }
    }
    if !feature_names.is_empty() && feature_names.len() != p {
        return Err(TrainError::WidthMismatch {
            expected: p,
            found: feature_names.len(),
        });
    }
    Ok(FeatureBlocks::build(&train_set.matrix))
}

fn train_inner(
    train_set: &Dataset,
    valid_set: Option<&Dataset>,
    feature_names: &[String],
    params: &TrainParams,
    blocks: &FeatureBlocks,
) -> Result<(Ensemble, TrainHistory), TrainError> {
    let n = train_set.matrix.n_rows();
    let p = train_set.matrix.n_features();
    let base_score = train_set.labels.iter().sum::<f64>() / n as f64;
    let mut preds = vec![base_score; n];
    let mut valid_preds = valid_set.map(|v| vec![base_score; v.labels.len()]);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees: Vec<TreeNode> = Vec::new();
    let mut history = TrainHistory::default();

    let mut best_valid = f64::INFINITY;
    let mut best_round = 0usize;
    let mut stale_rounds = 0usize;

    for _round in 0..params.max_rounds {
        let grads = gradients(&train_set.labels, &preds)?;

        let rows = if params.subsample < 1.0 {
            sample_indices(&mut rng, n, sampled_count(params.subsample, n))
        } else {
            (0..n as u32).collect()
        };
        let feats = if params.colsample < 1.0 {
            sample_indices(&mut rng, p, sampled_count(params.colsample, p))
        } else {
            (0..p as u32).collect()
        };

        let tree = grow_with_blocks(&train_set.matrix, blocks, &rows, &feats, &grads, params);
        for (i, pred) in preds.iter_mut().enumerate() {
            *pred += tree.predict(train_set.matrix.row(i));
        }
        if let (Some(v), Some(vp)) = (valid_set, valid_preds.as_mut()) {
            for (i, pred) in vp.iter_mut().enumerate() {
                *pred += tree.predict(v.matrix.row(i));
            }
        }
        trees.push(tree);

        history.train_rmse.push(rmse_of(&train_set.labels, &preds));
        if let (Some(v), Some(vp)) = (valid_set, valid_preds.as_ref()) {
            let vr = rmse_of(&v.labels, vp);
            history.valid_rmse.push(vr);
            if vr < best_valid {
                best_valid = vr;
                best_round = trees.len();
                stale_rounds = 0;
            } else {
                stale_rounds += 1;
                if stale_rounds >= params.early_stop_patience {
                    break;
                }
            }
        } else {
            best_round = trees.len();
        }
    }

    trees.truncate(best_round);
    history.best_round = best_round;

    let names = if feature_names.is_empty() {
        crate::features::feature_column_names(p)
    } else {
        feature_names.to_vec()
    };
    let model = Ensemble {
        format_version: MODEL_FORMAT_VERSION,
        base_score,
        n_features: p,
        feature_names: names,
        params: params.clone(),
        trees,
    };
    Ok((model, history))
}
