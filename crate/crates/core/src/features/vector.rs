//! Feature-vector assembly: distribution triples of every band and step laid
//! out time-major, followed by seven handcrafted covariates.

use super::quantiles::summarize_distribution;
use super::FeatureError;
use crate::raster::RasterCube;
use std::collections::BTreeMap;

/// Number of handcrafted features appended after the remote-sensing block.
pub const HANDCRAFTED_COUNT: usize = 7;

/// Fixed order of the handcrafted features.
pub const HANDCRAFTED_NAMES: [&str; HANDCRAFTED_COUNT] = [
    "latitude",
    "longitude",
    "year",
    "years_since_2003",
    "prev_avg_yield",
    "trend_intercept",
    "trend_slope",
];

/// Window of prior years that feeds `prev_avg_yield`.
const PREV_YIELD_WINDOW: usize = 5;

/// Maps `(step, band, stat)` to a flat remote-sensing feature index and back.
/// Layout is time-major with the `(q20, median, q80)` triple innermost:
/// `index = (t * bands + b) * 3 + s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub bands: usize,
    pub t_steps: usize,
}

impl FeatureLayout {
    pub fn new(bands: usize, t_steps: usize) -> Self {
        Self { bands, t_steps }
    }

    pub fn rs_len(&self) -> usize {
        3 * self.bands * self.t_steps
    }

    pub fn total_len(&self) -> usize {
        self.rs_len() + HANDCRAFTED_COUNT
    }

    #[inline]
    pub fn index(&self, step: usize, band: usize, stat: usize) -> usize {
        debug_assert!(step < self.t_steps && band < self.bands && stat < 3);
        (step * self.bands + band) * 3 + stat
    }

    #[inline]
    pub fn decode(&self, index: usize) -> (usize, usize, usize) {
        debug_assert!(index < self.rs_len());
        let stat = index % 3;
        let rest = index / 3;
        (rest / self.bands, rest % self.bands, stat)
    }
}

/// The complete per-sample input: `3 * bands * t_steps` remote-sensing values
/// plus the handcrafted block. NaN is permitted only in the remote-sensing
/// part (fully masked county-steps).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub rs_features: Vec<f64>,
    pub handcrafted: [f64; HANDCRAFTED_COUNT],
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.rs_features.len() + HANDCRAFTED_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_values(self) -> Vec<f64> {
        let mut v = self.rs_features;
        v.extend_from_slice(&self.handcrafted);
        v
    }
}

/// Per-county yield records from years strictly before the year being
/// featurized. Also supplies the pooled fallbacks used when a county has
/// little or no history of its own.
#[derive(Debug, Clone, Default)]
pub struct YieldHistory {
    by_county: BTreeMap<String, BTreeMap<i32, f64>>,
    max_year: Option<i32>,
}

impl YieldHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, county_id: &str, year: i32, yield_bu_ac: f64) {
        self.by_county
            .entry(county_id.to_string())
            .or_default()
            .insert(year, yield_bu_ac);
        self.max_year = Some(self.max_year.map_or(year, |m| m.max(year)));
    }

    pub fn max_year(&self) -> Option<i32> {
        self.max_year
    }

    pub fn county(&self, county_id: &str) -> Option<&BTreeMap<i32, f64>> {
        self.by_county.get(county_id)
    }

    fn global_mean(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for years in self.by_county.values() {
            for y in years.values() {
                sum += y;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    fn national_trend(&self) -> Option<(f64, f64)> {
        let pooled: Vec<(f64, f64)> = self
            .by_county
            .values()
            .flat_map(|years| years.iter().map(|(&y, &v)| (y as f64, v)))
            .collect();
        ols(&pooled)
    }
}

/// Ordinary least squares of y against x; `None` when x has no variance.
fn ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((mean_y - slope * mean_x, slope))
}

/// Computes the seven handcrafted features for one county-year.
///
/// `prev_avg_yield` averages the county's most recent (up to five) prior
/// years, falling back to the mean over the whole history. Trend intercept
/// and slope come from a per-county regression of yield against calendar
/// year, falling back to the pooled national regression, then to a flat line
/// at the global mean. An entirely empty history yields zeros for the three
/// yield-derived features.
pub fn handcrafted_features(
    latitude: f64,
    longitude: f64,
    year: i32,
    county_id: &str,
    history: &YieldHistory,
) -> [f64; HANDCRAFTED_COUNT] {
    let global_mean = history.global_mean().unwrap_or(0.0);
    let county = history.county(county_id);

    let prev_avg = county
        .filter(|m| !m.is_empty())
        .map(|m| {
            let recent: Vec<f64> = m.values().rev().take(PREV_YIELD_WINDOW).copied().collect();
            recent.iter().sum::<f64>() / recent.len() as f64
        })
        .unwrap_or(global_mean);

    let county_points: Vec<(f64, f64)> = county
        .map(|m| m.iter().map(|(&y, &v)| (y as f64, v)).collect())
        .unwrap_or_default();
    let (intercept, slope) = ols(&county_points)
        .or_else(|| history.national_trend())
        .unwrap_or((global_mean, 0.0));

    [
        latitude,
        longitude,
        year as f64,
        (year - 2003) as f64,
        prev_avg,
        intercept,
        slope,
    ]
}

/// Builds the full feature vector for one masked cube.
///
/// `history` must contain only years strictly before `cube.year`; anything
/// else is temporal leakage and is rejected.
pub fn build_feature_vector(
    cube: &RasterCube,
    centroid: (f64, f64),
    history: &YieldHistory,
) -> Result<FeatureVector, FeatureError> {
    if let Some(max) = history.max_year() {
        if max >= cube.year {
            return Err(FeatureError::TemporalLeakage {
                found: max,
                cube_year: cube.year,
            });
        }
    }
    let layout = FeatureLayout::new(cube.bands, cube.t_steps);
    let mut rs = Vec::with_capacity(layout.rs_len());
    for step in 0..cube.t_steps {
        for band in 0..cube.bands {
            let triple = summarize_distribution(cube, band, step)?;
            rs.push(triple.q20);
            rs.push(triple.median);
            rs.push(triple.q80);
        }
    }
    let handcrafted = handcrafted_features(centroid.0, centroid.1, cube.year, &cube.county_id, history);
    Ok(FeatureVector {
        rs_features: rs,
        handcrafted,
    })
}
