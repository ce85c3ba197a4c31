//! End-to-end wiring: featurization of cube collections, RMSE and R2
//! metrics, the per-year walk-forward protocol (train strictly before year
//! Y, test on Y, five seeded repetitions), and representation-size
//! accounting.

use crate::features::{
    histogramize, read_feature_table, FeatureError, FeatureTable, Sample, YieldHistory,
    HISTOGRAM_BINS,
};
use crate::gbrt::{train, train_batch, DataMatrix, Dataset, Ensemble, TrainError, TrainParams};
use crate::raster::{apply_mask, load_cube, load_mask, RasterCube, RasterError};
use crate::synth::{default_band_ranges, SyntheticWorld, SynthError};
use crate::tuner::{tune, SearchSpace, TuneError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Last day-of-year available to in-year predictions.
pub const IN_YEAR_LAST_DAY: u16 = 201;

/// Seeded repetitions averaged into every walk-forward metric.
pub const N_REPETITIONS: u64 = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("prediction/label length mismatch: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("labels have zero variance; R2 is undefined")]
    ZeroLabelVariance,
    #[error("no labeled training data before year {0}")]
    NoTrainingData(i32),
    #[error("no labeled test rows for year {0}")]
    NoTestRows(i32),
    #[error("temporal leakage: training row from year {row_year} offered for test year {test_year}")]
    Leakage { row_year: i32, test_year: i32 },
    #[error("county {0:?} missing from county metadata")]
    MissingCounty(String),
    #[error("no histogram range configured for band {0:?}")]
    MissingBandRange(String),
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Root mean square error.
pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let ss: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok((ss / predictions.len() as f64).sqrt())
}

/// Coefficient of determination about the label mean.
pub fn r2(predictions: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let ss_tot: f64 = labels.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroLabelVariance);
    }
    let ss_res: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    InYear,
    EndOfYear,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "inyear" => Some(Mode::InYear),
            "endofyear" => Some(Mode::EndOfYear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    Triples,
    Histograms,
}

impl Repr {
    pub fn parse(s: &str) -> Option<Repr> {
        match s {
            "triples" => Some(Repr::Triples),
            "histograms" => Some(Repr::Histograms),
            _ => None,
        }
    }
}

/// One featurizable county-year before representation extraction.
struct CubeItem {
    county_id: String,
    year: i32,
    centroid: (f64, f64),
    label: f64,
    cube: RasterCube,
}

fn rs_histogram_features(
    cube: &RasterCube,
    ranges: &BTreeMap<String, (f64, f64)>,
) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(HISTOGRAM_BINS * cube.bands * cube.t_steps);
    for step in 0..cube.t_steps {
        for band in 0..cube.bands {
            let name = &cube.band_names[band];
            let range = ranges
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::MissingBandRange(name.clone()))?;
            let hist = histogramize(cube, band, step, range)?;
            out.extend_from_slice(&hist.freqs);
        }
    }
    Ok(out)
}

/// Turns prepared cube items into a feature table.
///
/// Handcrafted history features for a row of year `y` use only yields from
/// years strictly before `y`, enforced by building the yield history
/// incrementally in year order. Rows are sorted by `(county_id, year)`.
fn featurize_items(
    mut items: Vec<CubeItem>,
    yields: &[(String, i32, f64)],
    mode: Mode,
    repr: Repr,
) -> Result<FeatureTable, EvalError> {
    if let Mode::InYear = mode {
        for item in &mut items {
            item.cube = item.cube.truncate_to_day(IN_YEAR_LAST_DAY);
        }
    }

    // remote-sensing block in parallel; width checked for consistency below
    let ranges: BTreeMap<String, (f64, f64)> = default_band_ranges().into_iter().collect();
    let rs_blocks: Vec<Vec<f64>> = items
        .par_iter()
        .map_init(
            Vec::new,
            |scratch: &mut Vec<f64>, item| match repr {
                Repr::Triples => {
                    let cube = &item.cube;
                    let layout = crate::features::FeatureLayout::new(cube.bands, cube.t_steps);
                    let mut rs = Vec::with_capacity(layout.rs_len());
                    for step in 0..cube.t_steps {
                        for band in 0..cube.bands {
                            scratch.clear();
                            for h in 0..cube.height {
                                for w in 0..cube.width {
                                    let v = cube.value(step, h, w, band);
                                    if !v.is_nan() {
                                        scratch.push(v as f64);
                                    }
                                }
                            }
                            if scratch.is_empty() {
                                rs.extend_from_slice(&[f64::NAN, f64::NAN, f64::NAN]);
                            } else {
                                scratch.sort_unstable_by(f64::total_cmp);
                                rs.push(crate::features::quantile_sorted(scratch, 0.2));
                                rs.push(crate::features::quantile_sorted(scratch, 0.5));
                                rs.push(crate::features::quantile_sorted(scratch, 0.8));
                            }
                        }
                    }
                    Ok(rs)
                }
                Repr::Histograms => rs_histogram_features(&item.cube, &ranges),
            },
        )
        .collect::<Result<_, EvalError>>()?;

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        (&items[a].county_id, items[a].year).cmp(&(&items[b].county_id, items[b].year))
    });

    let width = match order.first() {
        Some(&i) => match repr {
            Repr::Triples => rs_blocks[i].len() + crate::features::HANDCRAFTED_COUNT,
            Repr::Histograms => rs_blocks[i].len(),
        },
        None => 0,
    };
    let mut table = FeatureTable::new(width);

    match repr {
        Repr::Histograms => {
            for &i in &order {
                let item = &items[i];
                table.push(Sample {
                    county_id: item.county_id.clone(),
                    year: item.year,
                    features: rs_blocks[i].clone(),
                    label: item.label,
                })?;
            }
        }
        Repr::Triples => {
            // year-ordered passes keep the history strictly in the past
            let mut year_order: Vec<usize> = (0..items.len()).collect();
            year_order.sort_by_key(|&i| items[i].year);
            let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
            for i in year_order {
                by_year.entry(items[i].year).or_default().push(i);
            }
            let mut yields_by_year: BTreeMap<i32, Vec<(String, f64)>> = BTreeMap::new();
            for (county, year, value) in yields {
                if !value.is_nan() {
                    yields_by_year
                        .entry(*year)
                        .or_default()
                        .push((county.clone(), *value));
                }
            }
            let mut history = YieldHistory::new();
            let mut handcrafted: BTreeMap<usize, [f64; crate::features::HANDCRAFTED_COUNT]> =
                BTreeMap::new();
            let mut fed_years: Vec<i32> = Vec::new();
            for (&year, idxs) in &by_year {
                for (&y, entries) in yields_by_year.range(..year) {
                    if !fed_years.contains(&y) {
                        for (county, value) in entries {
                            history.insert(county, y, *value);
                        }
                        fed_years.push(y);
                    }
                }
                for &i in idxs {
                    let item = &items[i];
                    handcrafted.insert(
                        i,
                        crate::features::handcrafted_features(
                            item.centroid.0,
                            item.centroid.1,
                            year,
                            &item.county_id,
                            &history,
                        ),
                    );
                }
            }
            for &i in &order {
                let item = &items[i];
                let mut features = rs_blocks[i].clone();
                features.extend_from_slice(&handcrafted[&i]);
                table.push(Sample {
                    county_id: item.county_id.clone(),
                    year: item.year,
                    features,
                    label: item.label,
                })?;
            }
        }
    }
    Ok(table)
}

fn read_yields_csv(path: &Path) -> Result<Vec<(String, i32, f64)>, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (ln, line) in content.lines().enumerate() {
        if ln == 0 {
            if line.trim() != "county_id,year,yield_bu_ac" {
                return Err(EvalError::Input {
                    path: path.to_path_buf(),
                    reason: format!("unexpected yields header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(EvalError::Input {
                path: path.to_path_buf(),
                reason: format!("line {}: expected 3 fields", ln + 1),
            });
        }
        let year: i32 = parts[1].parse().map_err(|e| EvalError::Input {
            path: path.to_path_buf(),
            reason: format!("line {}: bad year: {e}", ln + 1),
        })?;
        let value: f64 = parts[2].parse().map_err(|e| EvalError::Input {
            path: path.to_path_buf(),
            reason: format!("line {}: bad yield: {e}", ln + 1),
        })?;
        out.push((parts[0].to_string(), year, value));
    }
    Ok(out)
}

fn read_counties_csv(path: &Path) -> Result<BTreeMap<String, (f64, f64)>, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BTreeMap::new();
    for (ln, line) in content.lines().enumerate() {
        if ln == 0 {
            if line.trim() != "county_id,lat,lon" {
                return Err(EvalError::Input {
                    path: path.to_path_buf(),
                    reason: format!("unexpected counties header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(EvalError::Input {
                path: path.to_path_buf(),
                reason: format!("line {}: expected 3 fields", ln + 1),
            });
        }
        let lat: f64 = parts[1].parse().map_err(|e| EvalError::Input {
            path: path.to_path_buf(),
            reason: format!("line {}: bad lat: {e}", ln + 1),
        })?;
        let lon: f64 = parts[2].parse().map_err(|e| EvalError::Input {
            path: path.to_path_buf(),
            reason: format!("line {}: bad lon: {e}", ln + 1),
        })?;
        out.insert(parts[0].to_string(), (lat, lon));
    }
    Ok(out)
}

/// Featurizes every cube directory under `cubes_dir` (any directory holding
/// a `metadata.json`), applying the shipped farmland mask when present.
pub fn featurize_cubes_dir(
    cubes_dir: &Path,
    yields_csv: &Path,
    counties_csv: &Path,
    mode: Mode,
    repr: Repr,
) -> Result<FeatureTable, EvalError> {
    let yields = read_yields_csv(yields_csv)?;
    let centroids = read_counties_csv(counties_csv)?;
    let mut label_of: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for (county, year, value) in &yields {
        label_of.insert((county.clone(), *year), *value);
    }

    let mut cube_dirs: Vec<PathBuf> = std::fs::read_dir(cubes_dir)
        .map_err(|e| EvalError::Io {
            path: cubes_dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("metadata.json").is_file())
        .collect();
    cube_dirs.sort();
    if cube_dirs.is_empty() {
        return Err(EvalError::Input {
            path: cubes_dir.to_path_buf(),
            reason: "no cube directories found".to_string(),
        });
    }

    let items: Vec<CubeItem> = cube_dirs
        .par_iter()
        .map(|dir| -> Result<CubeItem, EvalError> {
            let cube = load_cube(dir)?;
            let cube = match load_mask(dir, cube.height, cube.width)? {
                Some(mask) => apply_mask(&cube, &mask)?,
                None => cube,
            };
            let centroid = centroids
                .get(&cube.county_id)
                .copied()
                .ok_or_else(|| EvalError::MissingCounty(cube.county_id.clone()))?;
            let label = label_of
                .get(&(cube.county_id.clone(), cube.year))
                .copied()
                .unwrap_or(f64::NAN);
            Ok(CubeItem {
                county_id: cube.county_id.clone(),
                year: cube.year,
                centroid,
                label,
                cube,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    featurize_items(items, &yields, mode, repr)
}

/// Featurizes a synthetic world in memory, generating cubes on the fly.
pub fn featurize_world(
    world: &SyntheticWorld,
    mode: Mode,
    repr: Repr,
) -> Result<FeatureTable, EvalError> {
    let pairs: Vec<(usize, i32)> = (0..world.counties.len())
        .flat_map(|c| world.years().map(move |y| (c, y)))
        .collect();
    let items: Vec<CubeItem> = pairs
        .par_iter()
        .map(|&(c, year)| {
            let county = &world.counties[c];
            let cube = world.cube(c, year);
            let cube = apply_mask(&cube, &world.mask(c)).expect("mask matches its own cube");
            let record = world.record(c, year);
            CubeItem {
                county_id: county.county_id.clone(),
                year,
                centroid: (county.lat, county.lon),
                label: record.yield_obs,
                cube,
            }
        })
        .collect();
    let yields: Vec<(String, i32, f64)> = world
        .records
        .iter()
        .map(|r| (r.county_id.clone(), r.year, r.yield_obs))
        .collect();
    featurize_items(items, &yields, mode, repr)
}

/// Indices of labeled rows strictly before `test_year` (training) and of
/// labeled rows exactly at `test_year` (testing). Any offered training row
/// from `test_year` or later is a hard error.
pub fn temporal_split(
    table: &FeatureTable,
    test_year: i32,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (i, s) in table.samples.iter().enumerate() {
        if s.label.is_nan() {
            continue;
        }
        if s.year < test_year {
            train_rows.push(i);
        } else if s.year == test_year {
            test_rows.push(i);
        }
    }
    if train_rows.is_empty() {
        return Err(EvalError::NoTrainingData(test_year));
    }
    if test_rows.is_empty() {
        return Err(EvalError::NoTestRows(test_year));
    }
    // guard against future construction bugs: nothing at or past the year
    for &i in &train_rows {
        if table.samples[i].year >= test_year {
            return Err(EvalError::Leakage {
                row_year: table.samples[i].year,
                test_year,
            });
        }
    }
    Ok((train_rows, test_rows))
}

fn dataset_from_rows(table: &FeatureTable, rows: &[usize]) -> Dataset {
    let matrix_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| table.samples[i].features.clone())
        .collect();
    let labels: Vec<f64> = rows.iter().map(|&i| table.samples[i].label).collect();
    Dataset::new(DataMatrix::from_rows(&matrix_rows), labels)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YearRow {
    pub year: i32,
    pub rmse: f64,
    /// `None` when the test labels have zero variance.
    pub r2: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub max_train_year: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub tuned: bool,
    pub n_repetitions: u64,
    pub years: Vec<YearRow>,
    pub avg_rmse: f64,
    pub avg_r2: Option<f64>,
    pub seconds_total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature_table_bytes: Option<u64>,
}

/// Tuning policy for [`walk_forward`].
#[derive(Debug, Clone)]
pub enum Tuning {
    Off,
    On { space: SearchSpace, n_trials: usize },
}

/// Walk-forward evaluation: for each test year `Y` in order, (optionally
/// tune and) retrain on all labeled data before `Y`, predict year `Y`, and
/// average RMSE/R2 over [`N_REPETITIONS`] seeded repetitions (`seed + 0` to
/// `seed + 4`). History features never see year `Y` because they are baked
/// per-row from strictly earlier years at featurization time.
pub fn walk_forward(
    table: &FeatureTable,
    test_years: &[i32],
    mode: Mode,
    tuning: &Tuning,
    base_params: &TrainParams,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if test_years.is_empty() || table.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let started = std::time::Instant::now();
    let mut years_sorted = test_years.to_vec();
    years_sorted.sort_unstable();
    years_sorted.dedup();

    let mut year_rows = Vec::with_capacity(years_sorted.len());
    for &year in &years_sorted {
        let (train_rows, test_rows) = temporal_split(table, year)?;
        let train_set = dataset_from_rows(table, &train_rows);
        let test_set = dataset_from_rows(table, &test_rows);
        let max_train_year = train_rows
            .iter()
            .map(|&i| table.samples[i].year)
            .max()
            .expect("non-empty");

        let params = match tuning {
            Tuning::Off => base_params.clone(),
            Tuning::On { space, n_trials } => {
                tune(&train_set, space, base_params, *n_trials, seed)?.best_params
            }
        };

        let rep_seeds: Vec<u64> = (0..N_REPETITIONS).map(|rep| seed + rep).collect();
        let models = train_batch(&train_set, None, &[], &params, &rep_seeds, None)?;
        let reps: Vec<(f64, Option<f64>)> = models
            .iter()
            .map(|(model, _)| -> Result<(f64, Option<f64>), EvalError> {
                let preds: Vec<f64> = (0..test_set.matrix.n_rows())
                    .map(|i| model.predict(test_set.matrix.row(i)).expect("width matches"))
                    .collect();
                let rep_rmse = rmse(&preds, &test_set.labels)?;
                let rep_r2 = match r2(&preds, &test_set.labels) {
                    Ok(v) => Some(v),
                    Err(EvalError::ZeroLabelVariance) => None,
                    Err(e) => return Err(e),
                };
                Ok((rep_rmse, rep_r2))
            })
            .collect::<Result<_, EvalError>>()?;

        let rmse_mean = reps.iter().map(|r| r.0).sum::<f64>() / reps.len() as f64;
        let r2_mean = if reps.iter().all(|r| r.1.is_some()) {
            Some(reps.iter().map(|r| r.1.unwrap()).sum::<f64>() / reps.len() as f64)
        } else {
            None
        };
        year_rows.push(YearRow {
            year,
            rmse: rmse_mean,
            r2: r2_mean,
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            max_train_year,
        });
    }

    let avg_rmse = year_rows.iter().map(|r| r.rmse).sum::<f64>() / year_rows.len() as f64;
    let avg_r2 = if year_rows.iter().all(|r| r.r2.is_some()) {
        Some(year_rows.iter().map(|r| r.r2.unwrap()).sum::<f64>() / year_rows.len() as f64)
    } else {
        None
    };
    Ok(EvalReport {
        mode,
        tuned: matches!(tuning, Tuning::On { .. }),
        n_repetitions: N_REPETITIONS,
        years: year_rows,
        avg_rmse,
        avg_r2,
        seconds_total: started.elapsed().as_secs_f64(),
        feature_table_bytes: None,
    })
}

/// Trains one model exactly as a walk-forward year does (all labeled rows
/// before `test_year`, seed as given). Exposed so attribution runs can
/// reproduce a specific year's model.
pub fn train_for_year(
    table: &FeatureTable,
    test_year: i32,
    params: &TrainParams,
    seed: u64,
) -> Result<(Ensemble, Vec<usize>), EvalError> {
    let (train_rows, _) = temporal_split(table, test_year)?;
    let train_set = dataset_from_rows(table, &train_rows);
    let mut p = params.clone();
    p.seed = seed;
    let (model, _) = train(&train_set, None, &[], &p, None)?;
    Ok((model, train_rows))
}

/// Dataset view of arbitrary table rows, for attribution and prediction.
pub fn matrix_from_table(table: &FeatureTable, rows: &[usize]) -> DataMatrix {
    let matrix_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| table.samples[i].features.clone())
        .collect();
    DataMatrix::from_rows(&matrix_rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeReport {
    pub feature_table_bytes: u64,
    pub histogram_table_bytes: u64,
    /// feature bytes over histogram bytes.
    pub ratio: f64,
}

/// Byte sizes of the two serialized representations of the same dataset.
pub fn size_report(feature_table: &Path, histogram_table: &Path) -> Result<SizeReport, EvalError> {
    let feature_table_bytes = std::fs::metadata(feature_table)
        .map_err(|e| EvalError::Io {
            path: feature_table.to_path_buf(),
            source: e,
        })?
        .len();
    let histogram_table_bytes = std::fs::metadata(histogram_table)
        .map_err(|e| EvalError::Io {
            path: histogram_table.to_path_buf(),
            source: e,
        })?
        .len();
    Ok(SizeReport {
        feature_table_bytes,
        histogram_table_bytes,
        ratio: feature_table_bytes as f64 / histogram_table_bytes as f64,
    })
}

/// Convenience: feature table straight from disk into a training dataset,
/// keeping only labeled rows.
pub fn labeled_dataset(path: &Path) -> Result<(FeatureTable, Dataset), EvalError> {
    let table = read_feature_table(path)?;
    let rows: Vec<usize> = (0..table.len())
        .filter(|&i| !table.samples[i].label.is_nan())
        .collect();
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let ds = dataset_from_rows(&table, &rows);
    Ok((table, ds))
}
