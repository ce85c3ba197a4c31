//! Distribution triples: the three-value summary of a band's pixel values.

use super::FeatureError;
use crate::raster::RasterCube;

/// `(20% quantile, median, 80% quantile)` of one band at one step, in band
/// units. All components are NaN when there are no valid pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionTriple {
    pub q20: f64,
    pub median: f64,
    pub q80: f64,
}

impl DistributionTriple {
    pub const NODATA: DistributionTriple = DistributionTriple {
        q20: f64::NAN,
        median: f64::NAN,
        q80: f64::NAN,
    };

    pub fn is_nodata(&self) -> bool {
        self.q20.is_nan()
    }
}

/// Quantile by linear interpolation between order statistics: for quantile
/// `p` over `n` sorted values the (1-based) position is `h = (n - 1) * p + 1`
/// and the result is `x_⌊h⌋ + (h - ⌊h⌋) * (x_⌊h⌋₊₁ - x_⌊h⌋)`.
///
/// `sorted` must be non-empty and ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p + 1.0;
    let lo = (h.floor() as usize).clamp(1, n);
    let frac = h - lo as f64;
    let idx = lo - 1;
    if frac == 0.0 || idx + 1 >= n {
        sorted[idx]
    } else {
        sorted[idx] + frac * (sorted[idx + 1] - sorted[idx])
    }
}

/// Triple over a raw value slice; NaNs are ignored, empty input gives the
/// all-NaN triple.
pub fn distribution_triple(values: &[f64]) -> DistributionTriple {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return DistributionTriple::NODATA;
    }
    v.sort_unstable_by(f64::total_cmp);
    DistributionTriple {
        q20: quantile_sorted(&v, 0.2),
        median: quantile_sorted(&v, 0.5),
        q80: quantile_sorted(&v, 0.8),
    }
}

/// Triple of one band at one step over the cube's valid pixels.
pub fn summarize_distribution(
    cube: &RasterCube,
    band: usize,
    step: usize,
) -> Result<DistributionTriple, FeatureError> {
    if band >= cube.bands || step >= cube.t_steps {
        return Err(FeatureError::IndexOutOfRange {
            band,
            step,
            bands: cube.bands,
            t_steps: cube.t_steps,
        });
    }
    let values: Vec<f64> = cube
        .band_step_values(band, step)
        .into_iter()
        .map(|v| v as f64)
        .collect();
    Ok(distribution_triple(&values))
}
