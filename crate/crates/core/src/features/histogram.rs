//! Relative-frequency histograms over evenly spaced bins.

use super::FeatureError;
use crate::raster::RasterCube;

/// Number of evenly spaced intervals per band histogram.
pub const HISTOGRAM_BINS: usize = 32;

/// Relative frequencies of one band's pixel values in [`HISTOGRAM_BINS`]
/// evenly spaced intervals over `band_range`. Out-of-range values are clamped
/// into the edge bins so the frequencies always sum to one when any valid
/// pixel exists.
#[derive(Debug, Clone, PartialEq)]
pub struct BandHistogram {
    pub freqs: Vec<f64>,
    pub band_range: (f64, f64),
    pub valid_count: usize,
}

/// Histogram over raw values; NaNs are ignored. Bin `i` covers
/// `[min + i*w, min + (i+1)*w)` with `w = (max - min) / 32`, except the last
/// bin which also includes `max`.
pub fn histogram_of_values<I>(values: I, band_range: (f64, f64)) -> Result<BandHistogram, FeatureError>
where
    I: IntoIterator<Item = f64>,
{
    let (min, max) = band_range;
    if min.is_nan() || max.is_nan() || min >= max {
        return Err(FeatureError::BadRange { min, max });
    }
    let width = (max - min) / HISTOGRAM_BINS as f64;
    let mut counts = [0usize; HISTOGRAM_BINS];
    let mut valid_count = 0usize;
    for v in values {
        if v.is_nan() {
            continue;
        }
        let bin = ((v - min) / width).floor();
        let bin = if bin < 0.0 {
            0
        } else if bin >= HISTOGRAM_BINS as f64 {
            HISTOGRAM_BINS - 1
        } else {
            bin as usize
        };
        counts[bin] += 1;
        valid_count += 1;
    }
    let freqs = if valid_count == 0 {
        vec![0.0; HISTOGRAM_BINS]
    } else {
        counts.iter().map(|&c| c as f64 / valid_count as f64).collect()
    };
    Ok(BandHistogram {
        freqs,
        band_range,
        valid_count,
    })
}

/// Histogram of one band at one step over the cube's valid pixels.
pub fn histogramize(
    cube: &RasterCube,
    band: usize,
    step: usize,
    band_range: (f64, f64),
) -> Result<BandHistogram, FeatureError> {
    if band >= cube.bands || step >= cube.t_steps {
        return Err(FeatureError::IndexOutOfRange {
            band,
            step,
            bands: cube.bands,
            t_steps: cube.t_steps,
        });
    }
    histogram_of_values(
        cube.band_step_values(band, step).into_iter().map(|v| v as f64),
        band_range,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_concentration() {
        // all pixels at the exact midpoint of bin 7 over [0, 32]
        let mid = 7.5;
        let h = histogram_of_values(std::iter::repeat(mid).take(10), (0.0, 32.0)).unwrap();
        assert_eq!(h.freqs[7], 1.0);
        assert_eq!(h.freqs.iter().filter(|&&f| f > 0.0).count(), 1);
        assert_eq!(h.valid_count, 10);
    }

    #[test]
    fn pixels_at_bin_centers_spread_evenly() {
        // counting oracle: one pixel per bin center -> 1/32 each
        let centers = (0..32).map(|i| i as f64 + 0.5);
        let h = histogram_of_values(centers, (0.0, 32.0)).unwrap();
        for f in &h.freqs {
            assert!((f - 1.0 / 32.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_input_is_all_zero() {
        let h = histogram_of_values(std::iter::empty(), (0.0, 1.0)).unwrap();
        assert_eq!(h.valid_count, 0);
        assert!(h.freqs.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn out_of_range_values_clamp_into_edge_bins() {
        let h = histogram_of_values([-5.0, 0.5, 99.0].into_iter(), (0.0, 32.0)).unwrap();
        assert_eq!(h.freqs[0], 2.0 / 3.0);
        assert_eq!(h.freqs[31], 1.0 / 3.0);
        let total: f64 = h.freqs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_falls_into_last_bin() {
        let h = histogram_of_values([32.0].into_iter(), (0.0, 32.0)).unwrap();
        assert_eq!(h.freqs[31], 1.0);
    }

    #[test]
    fn bad_range_is_rejected() {
        assert!(matches!(
            histogram_of_values(std::iter::empty(), (1.0, 1.0)),
            Err(FeatureError::BadRange { .. })
        ));
    }
}
