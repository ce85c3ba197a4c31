//! Raster cubes and the masking/compositing front end of the pipeline.
//!
//! A [`RasterCube`] holds one county-year of remote-sensing data as a dense
//! `(t, h, w, b)` tensor of 8-day composites. Pixels carry a quiet-NaN nodata
//! sentinel; validity is derived from it rather than stored separately.
//! Boundary cropping and cropland masking both arrive as a precomputed
//! [`PixelMask`] that is ANDed into the cube with [`apply_mask`].

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Composite stride in days. Consecutive `start_days` entries must differ by this.
pub const COMPOSITE_DAYS: u16 = 8;

/// Band order for standard-configuration cubes: 7 surface-reflectance bands,
/// day/night land surface temperature, precipitation, vapor pressure.
pub const STANDARD_BAND_NAMES: [&str; 11] = [
    "sur_refl_b01",
    "sur_refl_b02",
    "sur_refl_b03",
    "sur_refl_b04",
    "sur_refl_b05",
    "sur_refl_b06",
    "sur_refl_b07",
    "lst_day",
    "lst_night",
    "prcp",
    "vp",
];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed metadata in {path}: {reason}")]
    Metadata { path: PathBuf, reason: String },
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },
    #[error("start_days stride != 8: {0}")]
    Stride(String),
    #[error("dimension mismatch: cube is {cube_h}x{cube_w}, mask is {mask_h}x{mask_w}")]
    MaskDimensions {
        cube_h: usize,
        cube_w: usize,
        mask_h: usize,
        mask_w: usize,
    },
    #[error("inconsistent cube shape: {0}")]
    Shape(String),
    #[error("compositing window [{start}, {end}] outside available days [{first}, {last}]")]
    WindowOutOfRange {
        start: u16,
        end: u16,
        first: u16,
        last: u16,
    },
}

/// One county-year tensor of 8-day composites, indexed `(t, h, w, b)` with
/// the band axis fastest. Invalid pixels hold quiet NaN in every band.
#[derive(Debug, Clone)]
pub struct RasterCube {
    pub county_id: String,
    pub year: i32,
    pub t_steps: usize,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub band_names: Vec<String>,
    /// Day-of-year on which each composite window starts.
    pub start_days: Vec<u16>,
    values: Vec<f32>,
}

// Payload equality is bitwise so that nodata (NaN) cells compare equal.
impl PartialEq for RasterCube {
    fn eq(&self, other: &Self) -> bool {
        self.county_id == other.county_id
            && self.year == other.year
            && self.t_steps == other.t_steps
            && self.height == other.height
            && self.width == other.width
            && self.bands == other.bands
            && self.band_names == other.band_names
            && self.start_days == other.start_days
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl RasterCube {
    /// Builds a cube from a dense row-major payload, validating the shape
    /// invariants (lengths agree, start days strictly increasing with
    /// stride 8).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        county_id: String,
        year: i32,
        t_steps: usize,
        height: usize,
        width: usize,
        bands: usize,
        band_names: Vec<String>,
        start_days: Vec<u16>,
        values: Vec<f32>,
    ) -> Result<Self, RasterError> {
        if band_names.len() != bands {
            return Err(RasterError::Shape(format!(
                "{} band names for {} bands",
                band_names.len(),
                bands
            )));
        }
        if start_days.len() != t_steps {
            return Err(RasterError::Shape(format!(
                "{} start days for {} steps",
                start_days.len(),
                t_steps
            )));
        }
        if t_steps == 0 || height == 0 || width == 0 || bands == 0 {
            return Err(RasterError::Shape("zero-sized axis".to_string()));
        }
        for pair in start_days.windows(2) {
            if pair[1] <= pair[0] || pair[1] - pair[0] != COMPOSITE_DAYS {
                return Err(RasterError::Stride(format!(
                    "start_days {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        let expected = t_steps * height * width * bands;
        if values.len() != expected {
            return Err(RasterError::PayloadSize {
                expected: expected * 4,
                found: values.len() * 4,
            });
        }
        Ok(Self {
            county_id,
            year,
            t_steps,
            height,
            width,
            bands,
            band_names,
            start_days,
            values,
        })
    }

    #[inline]
    fn idx(&self, t: usize, h: usize, w: usize, b: usize) -> usize {
        ((t * self.height + h) * self.width + w) * self.bands + b
    }

    #[inline]
    pub fn value(&self, t: usize, h: usize, w: usize, b: usize) -> f32 {
        self.values[self.idx(t, h, w, b)]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// A pixel is usable when at least one band carries data there.
    pub fn is_valid(&self, t: usize, h: usize, w: usize) -> bool {
        let base = self.idx(t, h, w, 0);
        self.values[base..base + self.bands].iter().any(|v| !v.is_nan())
    }

    pub fn valid_pixel_count(&self, t: usize) -> usize {
        (0..self.height)
            .flat_map(|h| (0..self.width).map(move |w| (h, w)))
            .filter(|&(h, w)| self.is_valid(t, h, w))
            .count()
    }

    /// All non-nodata values of one band at one step, in row-major pixel order.
    pub fn band_step_values(&self, band: usize, step: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for h in 0..self.height {
            for w in 0..self.width {
                let v = self.value(step, h, w, band);
                if !v.is_nan() {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Keeps only composites whose 8-day window ends on or before `last_day`,
    /// i.e. `start_day + 7 <= last_day`. Used to cut end-of-year cubes down to
    /// the in-year horizon.
    pub fn truncate_to_day(&self, last_day: u16) -> RasterCube {
        let keep = self
            .start_days
            .iter()
            .take_while(|&&d| d + (COMPOSITE_DAYS - 1) <= last_day)
            .count();
        let plane = self.height * self.width * self.bands;
        RasterCube {
            county_id: self.county_id.clone(),
            year: self.year,
            t_steps: keep,
            height: self.height,
            width: self.width,
            bands: self.bands,
            band_names: self.band_names.clone(),
            start_days: self.start_days[..keep].to_vec(),
            values: self.values[..keep * plane].to_vec(),
        }
    }
}

/// Boolean keep/drop grid applied to every step of a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    pub height: usize,
    pub width: usize,
    pub keep: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, keep: Vec<bool>) -> Result<Self, RasterError> {
        if keep.len() != height * width {
            return Err(RasterError::Shape(format!(
                "mask has {} entries for {}x{} grid",
                keep.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, keep })
    }

    pub fn all_keep(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            keep: vec![true; height * width],
        }
    }

    #[inline]
    pub fn keep_at(&self, h: usize, w: usize) -> bool {
        self.keep[h * self.width + w]
    }
}

/// ANDs a mask into a cube: output pixel validity is input validity AND keep,
/// newly dropped pixels become nodata in every band, all other values are
/// passed through bit-identically.
pub fn apply_mask(cube: &RasterCube, mask: &PixelMask) -> Result<RasterCube, RasterError> {
    if mask.height != cube.height || mask.width != cube.width {
        return Err(RasterError::MaskDimensions {
            cube_h: cube.height,
            cube_w: cube.width,
            mask_h: mask.height,
            mask_w: mask.width,
        });
    }
    let mut out = cube.clone();
    for t in 0..out.t_steps {
        for h in 0..out.height {
            for w in 0..out.width {
                if !mask.keep_at(h, w) {
                    let base = out.idx(t, h, w, 0);
                    for b in 0..out.bands {
                        out.values[base + b] = f32::NAN;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A single-band spatial grid, used for daily weather layers before they are
/// composited.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if data.len() != height * width {
            return Err(RasterError::Shape(format!(
                "grid has {} entries for {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

/// Aggregates daily grids into 8-day composites by the per-cell mean over
/// valid days. Window `i` covers days `[window_start_days[i], window_start_days[i] + 7]`
/// inclusive; `first_day` is the day-of-year of `daily[0]` and the sequence is
/// assumed contiguous. Cells with no valid day in a window become nodata.
pub fn composite_daily(
    daily: &[Grid],
    first_day: u16,
    window_start_days: &[u16],
) -> Result<Vec<Grid>, RasterError> {
    if daily.is_empty() {
        if window_start_days.is_empty() {
            return Ok(Vec::new());
        }
        return Err(RasterError::WindowOutOfRange {
            start: window_start_days[0],
            end: window_start_days[0] + COMPOSITE_DAYS - 1,
            first: first_day,
            last: first_day,
        });
    }
    let (height, width) = (daily[0].height, daily[0].width);
    for g in daily {
        if g.height != height || g.width != width {
            return Err(RasterError::Shape(
                "daily grids are not spatially aligned".to_string(),
            ));
        }
    }
    let last_day = first_day + (daily.len() as u16 - 1);
    let mut out = Vec::with_capacity(window_start_days.len());
    for &start in window_start_days {
        let end = start + COMPOSITE_DAYS - 1;
        if start < first_day || end > last_day {
            return Err(RasterError::WindowOutOfRange {
                start,
                end,
                first: first_day,
                last: last_day,
            });
        }
        let lo = (start - first_day) as usize;
        let mut data = vec![f32::NAN; height * width];
        for (cell, slot) in data.iter_mut().enumerate() {
            let mut sum = 0.0f64;
            let mut n = 0u32;
            for day in daily[lo..lo + COMPOSITE_DAYS as usize].iter() {
                let v = day.data[cell];
                if !v.is_nan() {
                    sum += v as f64;
                    n += 1;
                }
            }
            if n > 0 {
                *slot = (sum / n as f64) as f32;
            }
        }
        out.push(Grid { height, width, data });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CubeMetadata {
    county_id: String,
    year: i32,
    t_steps: usize,
    height: usize,
    width: usize,
    bands: usize,
    band_names: Vec<String>,
    start_days: Vec<u16>,
}

fn io_err(path: &Path, source: std::io::Error) -> RasterError {
    RasterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads one cube directory (`metadata.json` + `values.bin`).
pub fn load_cube(dir: &Path) -> Result<RasterCube, RasterError> {
    let meta_path = dir.join("metadata.json");
    let meta_bytes = fs::read(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: CubeMetadata =
        serde_json::from_slice(&meta_bytes).map_err(|e| RasterError::Metadata {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;

    let values_path = dir.join("values.bin");
    let payload = fs::read(&values_path).map_err(|e| io_err(&values_path, e))?;
    let expected = meta.t_steps * meta.height * meta.width * meta.bands * 4;
    if payload.len() != expected {
        return Err(RasterError::PayloadSize {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    RasterCube::new(
        meta.county_id,
        meta.year,
        meta.t_steps,
        meta.height,
        meta.width,
        meta.bands,
        meta.band_names,
        meta.start_days,
        values,
    )
}

/// Writes a cube directory. Round-trips byte-identically through [`load_cube`].
pub fn write_cube(cube: &RasterCube, dir: &Path) -> Result<(), RasterError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta = CubeMetadata {
        county_id: cube.county_id.clone(),
        year: cube.year,
        t_steps: cube.t_steps,
        height: cube.height,
        width: cube.width,
        bands: cube.bands,
        band_names: cube.band_names.clone(),
        start_days: cube.start_days.clone(),
    };
    let meta_path = dir.join("metadata.json");
    let json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    fs::write(&meta_path, json).map_err(|e| io_err(&meta_path, e))?;

    let values_path = dir.join("values.bin");
    let file = fs::File::create(&values_path).map_err(|e| io_err(&values_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for v in &cube.values {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| io_err(&values_path, e))?;
    }
    out.flush().map_err(|e| io_err(&values_path, e))?;
    Ok(())
}

/// Reads the optional `mask.bin` (one byte per pixel, 1 = keep) from a cube
/// directory. Returns `Ok(None)` when no mask file is present.
pub fn load_mask(dir: &Path, height: usize, width: usize) -> Result<Option<PixelMask>, RasterError> {
    let path = dir.join("mask.bin");
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(&path, e)),
    };
    if bytes.len() != height * width {
        return Err(RasterError::Shape(format!(
            "mask.bin has {} bytes for {}x{} grid",
            bytes.len(),
            height,
            width
        )));
    }
    let keep = bytes.iter().map(|&b| b != 0).collect();
    Ok(Some(PixelMask { height, width, keep }))
}

pub fn write_mask(mask: &PixelMask, dir: &Path) -> Result<(), RasterError> {
    let path = dir.join("mask.bin");
    let bytes: Vec<u8> = mask.keep.iter().map(|&k| u8::from(k)).collect();
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn test_cube() -> RasterCube {
        // 2 steps, 2x2 pixels, 11 bands; value encodes its index.
        let bands = 11;
        let n = 2 * 2 * 2 * bands;
        let values: Vec<f32> = (0..n).map(|i| i as f32 * 0.5).collect();
        RasterCube::new(
            "C001".to_string(),
            2020,
            2,
            2,
            2,
            bands,
            STANDARD_BAND_NAMES.iter().map(|s| s.to_string()).collect(),
            vec![49, 57],
            values,
        )
        .unwrap()
    }

    #[test]
    fn cube_round_trip_is_identity() {
        let cube = test_cube();
        let dir = tempdir().unwrap();
        write_cube(&cube, dir.path()).unwrap();
        let back = load_cube(dir.path()).unwrap();
        assert_eq!(cube, back);
        // values.bin byte identity
        let bytes = fs::read(dir.path().join("values.bin")).unwrap();
        let expected: Vec<u8> = cube.values().iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let cube = test_cube();
        let dir = tempdir().unwrap();
        write_cube(&cube, dir.path()).unwrap();
        let path = dir.path().join("values.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        match load_cube(dir.path()) {
            Err(RasterError::PayloadSize { .. }) => {}
            other => panic!("expected payload size error, got {other:?}"),
        }
    }

    #[test]
    fn bad_stride_is_rejected() {
        let err = RasterCube::new(
            "C".into(),
            2020,
            2,
            1,
            1,
            1,
            vec!["b".into()],
            vec![49, 58],
            vec![0.0; 2],
        )
        .unwrap_err();
        assert!(matches!(err, RasterError::Stride(_)));
    }

    #[test]
    fn all_true_mask_is_identity() {
        let cube = test_cube();
        let masked = apply_mask(&cube, &PixelMask::all_keep(2, 2)).unwrap();
        assert_eq!(cube, masked);
    }

    #[test]
    fn all_false_mask_kills_every_pixel() {
        let cube = test_cube();
        let mask = PixelMask::new(2, 2, vec![false; 4]).unwrap();
        let masked = apply_mask(&cube, &mask).unwrap();
        for t in 0..2 {
            assert_eq!(masked.valid_pixel_count(t), 0);
        }
        assert!(masked.values().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn checkerboard_mask_keeps_two_pixels_per_step() {
        let cube = test_cube();
        let mask = PixelMask::new(2, 2, vec![true, false, false, true]).unwrap();
        let masked = apply_mask(&cube, &mask).unwrap();
        for t in 0..2 {
            // enumeration oracle: 2 of 4 cells survive
            assert_eq!(masked.valid_pixel_count(t), 2);
        }
        // untouched pixels are bit-identical
        assert_eq!(masked.value(0, 0, 0, 3).to_bits(), cube.value(0, 0, 0, 3).to_bits());
    }

    #[test]
    fn masking_is_idempotent_and_commutes() {
        let cube = test_cube();
        let m1 = PixelMask::new(2, 2, vec![true, false, true, true]).unwrap();
        let m2 = PixelMask::new(2, 2, vec![true, true, false, true]).unwrap();
        let once = apply_mask(&cube, &m1).unwrap();
        let twice = apply_mask(&once, &m1).unwrap();
        assert_eq!(once, twice);
        let a = apply_mask(&apply_mask(&cube, &m1).unwrap(), &m2).unwrap();
        let b = apply_mask(&apply_mask(&cube, &m2).unwrap(), &m1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_dimension_mismatch_is_rejected() {
        let cube = test_cube();
        let mask = PixelMask::all_keep(3, 2);
        assert!(matches!(
            apply_mask(&cube, &mask),
            Err(RasterError::MaskDimensions { .. })
        ));
    }

    #[test]
    fn composite_of_constant_days_is_exact() {
        let daily: Vec<Grid> = (0..8).map(|_| Grid::constant(2, 2, 5.0)).collect();
        let out = composite_daily(&daily, 49, &[49]).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].data.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn composite_takes_arithmetic_mean() {
        // days carrying 1..8 in one cell -> mean 4.5
        let daily: Vec<Grid> = (1..=8).map(|d| Grid::constant(1, 1, d as f32)).collect();
        let out = composite_daily(&daily, 1, &[1]).unwrap();
        assert_eq!(out[0].data[0], 4.5);
    }

    #[test]
    fn composite_means_over_valid_days_only() {
        let mut daily: Vec<Grid> = (0..8).map(|_| Grid::constant(1, 1, f32::NAN)).collect();
        daily[3] = Grid::constant(1, 1, 7.0);
        let out = composite_daily(&daily, 10, &[10]).unwrap();
        assert_eq!(out[0].data[0], 7.0);
        // all-nodata window -> nodata
        let none: Vec<Grid> = (0..8).map(|_| Grid::constant(1, 1, f32::NAN)).collect();
        let out = composite_daily(&none, 10, &[10]).unwrap();
        assert!(out[0].data[0].is_nan());
    }

    #[test]
    fn composite_window_past_end_is_rejected() {
        let daily: Vec<Grid> = (0..9).map(|_| Grid::constant(1, 1, 1.0)).collect();
        assert!(matches!(
            composite_daily(&daily, 49, &[51]),
            Err(RasterError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn truncate_to_day_keeps_prefix() {
        // start days 49..=313 (34 steps); in-year horizon day 201 keeps 19
        let t = 34;
        let start_days: Vec<u16> = (0..t as u16).map(|k| 49 + 8 * k).collect();
        let cube = RasterCube::new(
            "C".into(),
            2020,
            t,
            1,
            1,
            1,
            vec!["b".into()],
            start_days,
            (0..t).map(|i| i as f32).collect(),
        )
        .unwrap();
        let cut = cube.truncate_to_day(201);
        assert_eq!(cut.t_steps, 19);
        assert_eq!(*cut.start_days.last().unwrap(), 193);
        assert_eq!(cut.values().len(), 19);
        let full = cube.truncate_to_day(321);
        assert_eq!(full.t_steps, 34);
    }
}
