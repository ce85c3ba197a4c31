//! Feature extraction: turns masked raster cubes into the two tabular
//! representations used downstream — 32-bin relative-frequency histograms and
//! `(q20, median, q80)` distribution triples — and assembles per-sample
//! feature vectors with seven handcrafted covariates appended.

mod histogram;
mod quantiles;
mod table;
mod vector;

pub use histogram::{histogram_of_values, histogramize, BandHistogram, HISTOGRAM_BINS};
pub use quantiles::{distribution_triple, quantile_sorted, summarize_distribution, DistributionTriple};
pub use table::{feature_column_names, read_feature_table, write_feature_table, FeatureTable, Sample};
pub use vector::{
    build_feature_vector, handcrafted_features, FeatureLayout, FeatureVector, YieldHistory,
    HANDCRAFTED_COUNT, HANDCRAFTED_NAMES,
};

use std::path::PathBuf;
use thiserror::Error;

/// Display conversion for yields: one soybean bushel per acre in kg/ha.
pub const BU_AC_TO_KG_HA: f64 = 67.26;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("band {band}/step {step} out of range for {bands} bands x {t_steps} steps")]
    IndexOutOfRange {
        band: usize,
        step: usize,
        bands: usize,
        t_steps: usize,
    },
    #[error("invalid band range: min {min} is not below max {max}")]
    BadRange { min: f64, max: f64 },
    #[error("temporal leakage: history contains year {found}, cube year is {cube_year}")]
    TemporalLeakage { found: i32, cube_year: i32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("feature table {path}: {reason}")]
    Table { path: PathBuf, reason: String },
}
