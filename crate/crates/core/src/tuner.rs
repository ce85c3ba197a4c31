//! Hyperparameter search with a univariate tree-structured Parzen estimator.
//!
//! After a uniform startup phase, each trial splits the history at the
//! best-objective quantile, fits one-dimensional Parzen densities (Gaussian
//! kernels plus a uniform prior kernel) to the good and bad sets of every
//! parameter independently, and proposes the candidate maximizing the
//! good-to-bad density ratio. Trials run sequentially; the search itself is
//! deterministic given seed, space, and history.

use crate::gbrt::{train, Dataset, TrainError, TrainParams};
use crate::rng_util::{sample_indices, standard_normal, uniform_below, unit_uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Trials sampled uniformly before the density model kicks in.
pub const N_STARTUP_TRIALS: usize = 10;
/// Fraction of history forming the good set.
pub const GOOD_QUANTILE: f64 = 0.25;
/// Candidates drawn from the good density per suggestion.
pub const N_CANDIDATES: usize = 24;
/// Kernel bandwidth floor, as a fraction of the (transformed) domain width.
pub const SIGMA_MIN_FRAC: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("search space is empty")]
    EmptySpace,
    #[error("invalid domain for {name}: {reason}")]
    BadDomain { name: String, reason: String },
    #[error("unknown tunable parameter {0:?}")]
    UnknownParam(String),
    #[error("dataset has {0} samples; at least 20 are required")]
    TooFewSamples(usize),
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// One parameter's domain. Log domains are searched in log space, integer
/// domains are searched continuously and rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Uniform(f64, f64),
    LogUniform(f64, f64),
    IntUniform(i64, i64),
}

impl Domain {
    fn validate(&self, name: &str) -> Result<(), TuneError> {
        let bad = |reason: String| TuneError::BadDomain {
            name: name.to_string(),
            reason,
        };
        match *self {
            Domain::Uniform(lo, hi) => {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(bad(format!("lo {lo} must be below hi {hi}")));
                }
            }
            Domain::LogUniform(lo, hi) => {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(bad(format!("lo {lo} must be below hi {hi}")));
                }
                if lo <= 0.0 {
                    return Err(bad(format!("log domain requires lo > 0, got {lo}")));
                }
            }
            Domain::IntUniform(lo, hi) => {
                if lo >= hi {
                    return Err(bad(format!("lo {lo} must be below hi {hi}")));
                }
            }
        }
        Ok(())
    }

    fn transformed_bounds(&self) -> (f64, f64) {
        match *self {
            Domain::Uniform(lo, hi) => (lo, hi),
            Domain::LogUniform(lo, hi) => (lo.ln(), hi.ln()),
            Domain::IntUniform(lo, hi) => (lo as f64, hi as f64),
        }
    }

    fn transform(&self, value: f64) -> f64 {
        match self {
            Domain::LogUniform(..) => value.ln(),
            _ => value,
        }
    }

    /// Back from transformed space, rounding integer domains and clamping
    /// into bounds.
    fn untransform(&self, x: f64) -> f64 {
        match *self {
            Domain::Uniform(lo, hi) => x.clamp(lo, hi),
            Domain::LogUniform(lo, hi) => x.exp().clamp(lo, hi),
            Domain::IntUniform(lo, hi) => x.round().clamp(lo as f64, hi as f64),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        match *self {
            Domain::Uniform(lo, hi) | Domain::LogUniform(lo, hi) => (lo..=hi).contains(&value),
            Domain::IntUniform(lo, hi) => {
                value.fract() == 0.0 && (lo as f64..=hi as f64).contains(&value)
            }
        }
    }
}

/// Ordered map of parameter names to domains. Keys follow [`TrainParams`]
/// field names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub params: BTreeMap<String, Domain>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), TuneError> {
        if self.params.is_empty() {
            return Err(TuneError::EmptySpace);
        }
        for (name, domain) in &self.params {
            domain.validate(name)?;
            if !TUNABLE.contains(&name.as_str()) {
                return Err(TuneError::UnknownParam(name.clone()));
            }
        }
        Ok(())
    }
}

const TUNABLE: [&str; 10] = [
    "eta",
    "max_depth",
    "lambda",
    "gamma",
    "min_child_weight",
    "subsample",
    "colsample",
    "sketch_eps",
    "max_rounds",
    "early_stop_patience",
];

/// The default space, reconstructed around the tuned values the evaluation
/// protocol tends to land on: deep trees, low learning rates, moderate
/// row and column sampling.
pub fn default_space() -> SearchSpace {
    let mut params = BTreeMap::new();
    params.insert("max_depth".to_string(), Domain::IntUniform(4, 25));
    params.insert("eta".to_string(), Domain::LogUniform(0.01, 0.3));
    params.insert("subsample".to_string(), Domain::Uniform(0.5, 1.0));
    params.insert("colsample".to_string(), Domain::Uniform(0.5, 1.0));
    params.insert("lambda".to_string(), Domain::LogUniform(1e-3, 10.0));
    params.insert("gamma".to_string(), Domain::Uniform(0.0, 5.0));
    params.insert("min_child_weight".to_string(), Domain::IntUniform(1, 10));
    SearchSpace { params }
}

/// Applies sampled values onto a base parameter set.
pub fn apply_params(
    base: &TrainParams,
    values: &BTreeMap<String, f64>,
) -> Result<TrainParams, TuneError> {
    let mut p = base.clone();
    for (name, &v) in values {
        match name.as_str() {
            "eta" => p.eta = v,
            "max_depth" => p.max_depth = v as usize,
            "lambda" => p.lambda = v,
            "gamma" => p.gamma = v,
            "min_child_weight" => p.min_child_weight = v,
            "subsample" => p.subsample = v,
            "colsample" => p.colsample = v,
            "sketch_eps" => p.sketch_eps = v,
            "max_rounds" => p.max_rounds = v as usize,
            "early_stop_patience" => p.early_stop_patience = v as usize,
            other => return Err(TuneError::UnknownParam(other.to_string())),
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Failed,
}

/// One evaluated trial: sampled parameter values and the validation RMSE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub params: BTreeMap<String, f64>,
    pub objective: Option<f64>,
    pub status: TrialStatus,
}

/// One-dimensional Parzen mixture: a Gaussian at every observation plus a
/// uniform kernel over the domain, all equally weighted.
struct ParzenDensity {
    points: Vec<f64>,
    bandwidths: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl ParzenDensity {
    fn fit(mut observations: Vec<f64>, lo: f64, hi: f64) -> Self {
        observations.sort_unstable_by(f64::total_cmp);
        let width = hi - lo;
        let n = observations.len();
        // The floor scales with 1/(n + 1): without it, a converged cluster
        // of near-identical observations collapses every bandwidth onto the
        // absolute minimum and the density ratio locks onto the incumbent,
        // never exploring again.
        let sigma_min = (width / 100f64.min(n as f64 + 1.0)).max(SIGMA_MIN_FRAC * width);
        let bandwidths = (0..n)
            .map(|i| {
                let left = if i > 0 {
                    observations[i] - observations[i - 1]
                } else {
                    f64::NEG_INFINITY
                };
                let right = if i + 1 < n {
                    observations[i + 1] - observations[i]
                } else {
                    f64::NEG_INFINITY
                };
                let bw = left.max(right);
                if bw.is_finite() {
                    bw.clamp(sigma_min, width)
                } else {
                    // single observation: fall back to the whole domain
                    width
                }
            })
            .collect();
        Self {
            points: observations,
            bandwidths,
            lo,
            hi,
        }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let width = self.hi - self.lo;
        let mut acc = 1.0 / width; // uniform prior kernel
        for (&p, &bw) in self.points.iter().zip(&self.bandwidths) {
            let z = (x - p) / bw;
            acc += (-0.5 * z * z).exp() / (bw * std::f64::consts::TAU.sqrt());
        }
        (acc / (self.points.len() + 1) as f64).ln()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let k = self.points.len();
        let component = uniform_below(rng, (k + 1) as u64) as usize;
        let x = if component == k {
            self.lo + unit_uniform(rng) * (self.hi - self.lo)
        } else {
            self.points[component] + self.bandwidths[component] * standard_normal(rng)
        };
        x.clamp(self.lo, self.hi)
    }
}

fn uniform_in_domain(domain: &Domain, rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = domain.transformed_bounds();
    domain.untransform(lo + unit_uniform(rng) * (hi - lo))
}

/// Proposes parameter values given the trial history.
///
/// The first [`N_STARTUP_TRIALS`] completed trials are sampled uniformly;
/// afterwards each parameter is suggested independently by maximizing the
/// good-to-bad Parzen density ratio over [`N_CANDIDATES`] draws from the
/// good density.
pub fn tpe_suggest(
    history: &[TrialRecord],
    space: &SearchSpace,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<String, f64>, TuneError> {
    space.validate()?;
    let completed: Vec<&TrialRecord> = history
        .iter()
        .filter(|t| t.status == TrialStatus::Complete && t.objective.is_some_and(f64::is_finite))
        .collect();

    let mut out = BTreeMap::new();
    if completed.len() < N_STARTUP_TRIALS {
        for (name, domain) in &space.params {
            out.insert(name.clone(), uniform_in_domain(domain, rng));
        }
        return Ok(out);
    }

    // Stable objective order: ties break on trial id.
    let mut order: Vec<usize> = (0..completed.len()).collect();
    order.sort_by(|&a, &b| {
        let oa = completed[a].objective.unwrap();
        let ob = completed[b].objective.unwrap();
        oa.total_cmp(&ob)
            .then(completed[a].trial_id.cmp(&completed[b].trial_id))
    });
    let n_good =
        ((GOOD_QUANTILE * completed.len() as f64).ceil() as usize).clamp(1, completed.len() - 1);

    for (name, domain) in &space.params {
        let collect = |ids: &[usize]| -> Vec<f64> {
            ids.iter()
                .filter_map(|&i| completed[i].params.get(name))
                .map(|&v| domain.transform(v))
                .collect()
        };
        let good = collect(&order[..n_good]);
        let bad = collect(&order[n_good..]);
        let (lo, hi) = domain.transformed_bounds();
        let good_density = ParzenDensity::fit(good, lo, hi);
        let bad_density = ParzenDensity::fit(bad, lo, hi);

        let mut best_x = f64::NAN;
        let mut best_score = f64::NEG_INFINITY;
        for _ in 0..N_CANDIDATES {
            let x = good_density.sample(rng);
            let score = good_density.log_pdf(x) - bad_density.log_pdf(x);
            if score > best_score {
                best_score = score;
                best_x = x;
            }
        }
        out.insert(name.clone(), domain.untransform(best_x));
    }
    Ok(out)
}

/// Search outcome: the winning parameters, their objective, the validation
/// row indices that were held out, and the full trial log.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best_params: TrainParams,
    pub best_objective: f64,
    pub valid_indices: Vec<u32>,
    pub trials: Vec<TrialRecord>,
}

/// Runs the search: one seeded 10% validation split held fixed across
/// trials, each trial training with suggested parameters and scored by its
/// best validation RMSE. The caller retrains on the full data afterwards.
pub fn tune(
    dataset: &Dataset,
    space: &SearchSpace,
    base: &TrainParams,
    n_trials: usize,
    seed: u64,
) -> Result<TuneResult, TuneError> {
    space.validate()?;
    let n = dataset.labels.len();
    if n < 20 {
        return Err(TuneError::TooFewSamples(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_valid = ((0.1 * n as f64).round() as usize).clamp(1, n - 1);
    let valid_indices = sample_indices(&mut rng, n, n_valid);

    let mut in_valid = vec![false; n];
    for &i in &valid_indices {
        in_valid[i as usize] = true;
    }
    let take = |keep_valid: bool| -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .filter(|&i| in_valid[i] == keep_valid)
            .map(|i| dataset.matrix.row(i).to_vec())
            .collect();
        let labels: Vec<f64> = (0..n)
            .filter(|&i| in_valid[i] == keep_valid)
            .map(|i| dataset.labels[i])
            .collect();
        Dataset::new(crate::gbrt::DataMatrix::from_rows(&rows), labels)
    };
    let train_set = take(false);
    let valid_set = take(true);

    let mut trials: Vec<TrialRecord> = Vec::with_capacity(n_trials);
    for trial_id in 0..n_trials {
        let values = tpe_suggest(&trials, space, &mut rng)?;
        let mut params = apply_params(base, &values)?;
        params.seed = seed.wrapping_add(trial_id as u64);
        let record = match train(&train_set, Some(&valid_set), &[], &params, None) {
            Ok((_, history)) => {
                let objective = history
                    .valid_rmse
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                TrialRecord {
                    trial_id,
                    params: values,
                    objective: Some(objective),
                    status: TrialStatus::Complete,
                }
            }
            Err(_) => TrialRecord {
                trial_id,
                params: values,
                objective: None,
                status: TrialStatus::Failed,
            },
        };
        trials.push(record);
    }

    let best = trials
        .iter()
        .filter(|t| t.status == TrialStatus::Complete)
        .min_by(|a, b| {
            a.objective
                .unwrap()
                .total_cmp(&b.objective.unwrap())
                .then(a.trial_id.cmp(&b.trial_id))
        })
        .ok_or(TuneError::AllTrialsFailed(n_trials))?;

    Ok(TuneResult {
        best_params: apply_params(base, &best.params)?,
        best_objective: best.objective.unwrap(),
        valid_indices,
        trials: trials.clone(),
    })
}

/// Writes trial records to a JSON-lines file, one record per line.
pub fn write_trial_log(trials: &[TrialRecord], path: &Path) -> Result<(), TuneError> {
    let file = std::fs::File::create(path).map_err(|e| TuneError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = std::io::BufWriter::new(file);
    for t in trials {
        let line = serde_json::to_string(t).expect("trial record serializes");
        writeln!(out, "{line}").map_err(|e| TuneError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    out.flush().map_err(|e| TuneError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
