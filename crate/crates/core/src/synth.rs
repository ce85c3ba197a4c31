//! Seeded synthetic county-yield world with a known signal structure.
//!
//! Each county carries a fixed centroid and a latent fertility scalar; each
//! county-year adds a weather latent. Per band and composite step, pixels are
//! drawn from a skewed normal whose location follows a smooth seasonal curve
//! modulated by the latents. The near-infrared-analog band (`sur_refl_b02`)
//! carries the dominant yield signal through a narrow late-season bump, so
//! end-to-end runs have a known most-important band-by-timeframe group and
//! in-year truncation (day 201) provably removes information.
//!
//! Everything derives deterministically from the master seed through
//! per-entity substreams, so cubes can be materialized lazily and in
//! parallel with identical results.

use crate::raster::{PixelMask, RasterCube, RasterError, STANDARD_BAND_NAMES};
use crate::rng_util::{derive_seed, standard_normal_pair, unit_uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Synthetic "states" the counties are spread across.
pub const N_STATES: usize = 13;

/// Day-of-year of the first composite window.
pub const FIRST_START_DAY: u16 = 49;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid world config: {0}")]
    BadConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_counties: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Inclusive bounds for the per-county grid edge length.
    pub grid_min: usize,
    pub grid_max: usize,
    /// 34 for end-of-year worlds, 19 for in-year-only worlds.
    pub t_steps: usize,
    /// Label noise in bu/ac.
    pub noise_sd: f64,
    /// Mean yield drift per calendar year, bu/ac.
    pub trend_per_year: f64,
    /// Scale of the per-county fertility latent.
    pub fertility_sd: f64,
    /// Scale of the per-county-year weather latent.
    pub weather_sd: f64,
    /// Probability that a (county-year, step) is fully masked out.
    pub mask_step_fraction: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_counties: 800,
            first_year: 2003,
            last_year: 2021,
            grid_min: 5,
            grid_max: 8,
            t_steps: 34,
            noise_sd: 2.0,
            trend_per_year: 0.3,
            fertility_sd: 1.0,
            weather_sd: 1.0,
            mask_step_fraction: 0.10,
            seed: 42,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_counties == 0 {
            return Err(SynthError::BadConfig("n_counties must be >= 1".into()));
        }
        if self.last_year < self.first_year {
            return Err(SynthError::BadConfig(format!(
                "year range {}..{} is empty",
                self.first_year, self.last_year
            )));
        }
        if !(self.t_steps == 19 || self.t_steps == 34) {
            return Err(SynthError::BadConfig(format!(
                "t_steps must be 19 or 34, got {}",
                self.t_steps
            )));
        }
        if self.grid_min < 2 || self.grid_min > self.grid_max {
            return Err(SynthError::BadConfig(format!(
                "grid range {}..{} invalid",
                self.grid_min, self.grid_max
            )));
        }
        if self.noise_sd < 0.0 || self.fertility_sd < 0.0 || self.weather_sd < 0.0 {
            return Err(SynthError::BadConfig("scales must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.mask_step_fraction) {
            return Err(SynthError::BadConfig(
                "mask_step_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn n_years(&self) -> usize {
        (self.last_year - self.first_year) as usize + 1
    }
}

/// Yield model coefficients: how the latents combine into bu/ac.
const BASE_YIELD: f64 = 45.0;
const YIELD_PER_FERTILITY: f64 = 1.0;
const YIELD_PER_WEATHER: f64 = 0.5;
const YIELD_PER_NIR_PEAK: f64 = 5.0;
/// Composition of the near-infrared peak latent.
const NIR_PEAK_FERTILITY: f64 = 0.8;
const NIR_PEAK_WEATHER: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountyInfo {
    pub county_id: String,
    pub state: usize,
    pub lat: f64,
    pub lon: f64,
    pub fertility: f64,
    pub height: usize,
    pub width: usize,
    #[serde(skip)]
    mask: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YearRecord {
    pub county_id: String,
    pub year: i32,
    pub weather: f64,
    pub nir_peak: f64,
    /// Noiseless yield, kept for oracle checks.
    pub yield_true: f64,
    /// Observed (noisy) yield in bu/ac.
    pub yield_obs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub counties: Vec<CountyInfo>,
    /// County-major, year-minor; see [`SyntheticWorld::record`].
    pub records: Vec<YearRecord>,
}

fn substream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(derive_seed(seed, tag), a), b))
}

const TAG_COUNTY: u64 = 1;
const TAG_STATE: u64 = 2;
const TAG_STATE_YEAR: u64 = 3;
const TAG_COUNTY_YEAR: u64 = 4;
const TAG_CUBE: u64 = 5;

fn state_of(county: usize, n_counties: usize) -> usize {
    county * N_STATES / n_counties.max(1)
}

/// Broad vegetation season centered at day 200.
fn green_bump(day: f64) -> f64 {
    let z = (day - 200.0) / 45.0;
    (-0.5 * z * z).exp()
}

/// Narrow late-season bump carrying the yield signal; its center (day 215)
/// lies past the in-year horizon of day 201.
fn nir_bump(day: f64) -> f64 {
    let z = (day - 215.0) / 14.0;
    (-0.5 * z * z).exp()
}

/// Seasonal temperature arc over the year.
fn temp_arc(day: f64) -> f64 {
    ((day - 20.0) / 330.0 * std::f64::consts::PI).sin().max(0.0)
}

/// Pixel distribution of one band at one day given the county-year latents:
/// (location, scale, skewness alpha).
fn band_distribution(band: usize, day: f64, fertility: f64, weather: f64) -> (f64, f64, f64) {
    let nir_peak = NIR_PEAK_FERTILITY * fertility + NIR_PEAK_WEATHER * weather;
    match band {
        // red: vegetation absorbs; greener fields dip lower
        0 => (0.28 - 0.10 * green_bump(day) * (1.0 + 0.10 * fertility), 0.030, 3.0),
        // near-infrared analog: the signal band
        1 => (
            0.22 + 0.16 * green_bump(day) + 0.045 * nir_bump(day) * nir_peak,
            0.030,
            3.0,
        ),
        // blue
        2 => (0.10 + 0.03 * temp_arc(day), 0.025, 3.0),
        // green
        3 => (0.14 + 0.05 * green_bump(day) * (1.0 + 0.05 * fertility), 0.025, 3.0),
        4 => (0.30 + 0.04 * green_bump(day), 0.030, 3.0),
        5 => (0.25 - 0.03 * green_bump(day) + 0.010 * weather * temp_arc(day), 0.030, 3.0),
        6 => (0.20 - 0.02 * green_bump(day) + 0.010 * fertility, 0.030, 3.0),
        // land surface temperature, day and night
        7 => (278.0 + 28.0 * temp_arc(day) + 2.0 * weather, 1.6, -1.5),
        8 => (266.0 + 20.0 * temp_arc(day) + 1.5 * weather, 1.4, -1.5),
        // precipitation
        9 => (2.5 + 1.2 * temp_arc(day) + 0.6 * weather, 1.8, 4.0),
        // vapor pressure
        10 => (700.0 + 500.0 * temp_arc(day) + 90.0 * weather, 70.0, 2.0),
        _ => unreachable!("11 bands"),
    }
}

/// Theoretical value bounds per band, used as default histogram ranges.
pub fn default_band_ranges() -> Vec<(String, (f64, f64))> {
    STANDARD_BAND_NAMES
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let range = match b {
                0..=6 => (0.0, 1.0),
                7 | 8 => (240.0, 340.0),
                9 => (0.0, 30.0),
                10 => (0.0, 3000.0),
                _ => unreachable!(),
            };
            (name.to_string(), range)
        })
        .collect()
}

fn skew_normal(rng: &mut ChaCha8Rng, alpha: f64) -> f64 {
    let delta = alpha / (1.0 + alpha * alpha).sqrt();
    let (n0, n1) = standard_normal_pair(rng);
    delta * n0.abs() + (1.0 - delta * delta).sqrt() * n1
}

impl SyntheticWorld {
    /// Draws all latents. Cubes are generated lazily by [`Self::cube`].
    pub fn generate(config: WorldConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let seed = config.seed;

        let state_fertility: Vec<f64> = (0..N_STATES)
            .map(|s| {
                let mut rng = substream(seed, TAG_STATE, s as u64, 0);
                crate::rng_util::standard_normal(&mut rng)
            })
            .collect();

        let counties: Vec<CountyInfo> = (0..config.n_counties)
            .map(|c| {
                let mut rng = substream(seed, TAG_COUNTY, c as u64, 0);
                let state = state_of(c, config.n_counties);
                // states on a rough grid over the study area
                let state_lat = 36.0 + (state % 4) as f64 * 2.8;
                let state_lon = -102.0 + (state / 4) as f64 * 4.5;
                let lat = state_lat + 2.0 * (unit_uniform(&mut rng) - 0.5);
                let lon = state_lon + 3.5 * (unit_uniform(&mut rng) - 0.5);
                let z_county = crate::rng_util::standard_normal(&mut rng);
                let fertility =
                    config.fertility_sd * (0.6 * state_fertility[state] + 0.8 * z_county);
                let span = config.grid_max - config.grid_min + 1;
                let height = config.grid_min + (unit_uniform(&mut rng) * span as f64) as usize;
                let width = config.grid_min + (unit_uniform(&mut rng) * span as f64) as usize;
                let height = height.min(config.grid_max);
                let width = width.min(config.grid_max);
                let keep_prob = 0.55 + 0.35 * unit_uniform(&mut rng);
                let mut mask: Vec<bool> = (0..height * width)
                    .map(|_| unit_uniform(&mut rng) < keep_prob)
                    .collect();
                // a county must keep at least a few farmland pixels
                if mask.iter().filter(|&&k| k).count() < 4 {
                    for slot in mask.iter_mut().take(4) {
                        *slot = true;
                    }
                }
                CountyInfo {
                    county_id: format!("S{state:02}-C{c:04}"),
                    state,
                    lat,
                    lon,
                    fertility,
                    height,
                    width,
                    mask,
                }
            })
            .collect();

        let mut records = Vec::with_capacity(config.n_counties * config.n_years());
        for county in &counties {
            let c_idx = records.len() / config.n_years();
            for year in config.first_year..=config.last_year {
                let mut sy = substream(seed, TAG_STATE_YEAR, county.state as u64, year as u64);
                let z_state_year = crate::rng_util::standard_normal(&mut sy);
                let mut cy = substream(seed, TAG_COUNTY_YEAR, c_idx as u64, year as u64);
                let z_county_year = crate::rng_util::standard_normal(&mut cy);
                let weather = config.weather_sd * (0.8 * z_state_year + 0.6 * z_county_year);
                let nir_peak = NIR_PEAK_FERTILITY * county.fertility + NIR_PEAK_WEATHER * weather;
                let yield_true = BASE_YIELD
                    + YIELD_PER_FERTILITY * county.fertility
                    + YIELD_PER_WEATHER * weather
                    + YIELD_PER_NIR_PEAK * nir_peak
                    + config.trend_per_year * (year - config.first_year) as f64;
                let noise = config.noise_sd * crate::rng_util::standard_normal(&mut cy);
                let yield_obs = (yield_true + noise).max(0.0);
                records.push(YearRecord {
                    county_id: county.county_id.clone(),
                    year,
                    weather,
                    nir_peak,
                    yield_true,
                    yield_obs,
                });
            }
        }

        Ok(Self {
            config,
            counties,
            records,
        })
    }

    pub fn record(&self, county_idx: usize, year: i32) -> &YearRecord {
        let y = (year - self.config.first_year) as usize;
        &self.records[county_idx * self.config.n_years() + y]
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.config.first_year..=self.config.last_year
    }

    /// The farmland mask shipped alongside each county's cubes.
    pub fn mask(&self, county_idx: usize) -> PixelMask {
        let county = &self.counties[county_idx];
        PixelMask {
            height: county.height,
            width: county.width,
            keep: county.mask.clone(),
        }
    }

    /// Materializes the raster cube of one county-year. Deterministic in the
    /// world seed; roughly 10% of steps are fully nodata, and non-farmland
    /// pixels are drawn from a latent-free, shifted distribution so that
    /// skipping the mask visibly degrades the signal.
    pub fn cube(&self, county_idx: usize, year: i32) -> RasterCube {
        let config = &self.config;
        let county = &self.counties[county_idx];
        let record = self.record(county_idx, year);
        let t_steps = config.t_steps;
        let (height, width) = (county.height, county.width);
        let bands = STANDARD_BAND_NAMES.len();
        let start_days: Vec<u16> = (0..t_steps as u16).map(|k| FIRST_START_DAY + 8 * k).collect();

        let mut rng = substream(config.seed, TAG_CUBE, county_idx as u64, year as u64);
        let mut values = vec![f32::NAN; t_steps * height * width * bands];
        for (t, &start) in start_days.iter().enumerate() {
            if unit_uniform(&mut rng) < config.mask_step_fraction {
                continue; // fully masked step: cloud-style dropout
            }
            let day = start as f64 + 3.5;
            for h in 0..height {
                for w in 0..width {
                    let farmland = county.mask[h * width + w];
                    let base = ((t * height + h) * width + w) * bands;
                    for b in 0..bands {
                        let (loc, scale, alpha) = if farmland {
                            band_distribution(b, day, county.fertility, record.weather)
                        } else {
                            let (loc, scale, alpha) = band_distribution(b, day, 0.0, 0.0);
                            (loc + 2.0 * scale, scale, alpha)
                        };
                        let v = loc + scale * skew_normal(&mut rng, alpha);
                        values[base + b] = v as f32;
                    }
                }
            }
        }
        RasterCube::new(
            county.county_id.clone(),
            year,
            t_steps,
            height,
            width,
            bands,
            STANDARD_BAND_NAMES.iter().map(|s| s.to_string()).collect(),
            start_days,
            values,
        )
        .expect("synthetic cube obeys shape invariants")
    }

    /// Writes the whole world: one cube directory per county-year plus
    /// `yields.csv`, `counties.csv`, and `truth.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|e| SynthError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;

        (0..self.counties.len())
            .into_par_iter()
            .try_for_each(|c| -> Result<(), SynthError> {
                let county = &self.counties[c];
                for year in self.years() {
                    let cube = self.cube(c, year);
                    let cube_dir = dir.join(format!("{}_{}", county.county_id, year));
                    crate::raster::write_cube(&cube, &cube_dir)?;
                    crate::raster::write_mask(&self.mask(c), &cube_dir)?;
                }
                Ok(())
            })?;

        let yields_path = dir.join("yields.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&yields_path).map_err(|e| {
            SynthError::Io {
                path: yields_path.clone(),
                source: e,
            }
        })?);
        writeln!(out, "county_id,year,yield_bu_ac").map_err(|e| SynthError::Io {
            path: yields_path.clone(),
            source: e,
        })?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.county_id, r.year, r.yield_obs).map_err(|e| {
                SynthError::Io {
                    path: yields_path.clone(),
                    source: e,
                }
            })?;
        }
        out.flush().map_err(|e| SynthError::Io {
            path: yields_path.clone(),
            source: e,
        })?;

        let counties_path = dir.join("counties.csv");
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(&counties_path).map_err(|e| {
                SynthError::Io {
                    path: counties_path.clone(),
                    source: e,
                }
            })?);
        writeln!(out, "county_id,lat,lon").map_err(|e| SynthError::Io {
            path: counties_path.clone(),
            source: e,
        })?;
        for c in &self.counties {
            writeln!(out, "{},{},{}", c.county_id, c.lat, c.lon).map_err(|e| SynthError::Io {
                path: counties_path.clone(),
                source: e,
            })?;
        }
        out.flush().map_err(|e| SynthError::Io {
            path: counties_path.clone(),
            source: e,
        })?;

        let truth_path = dir.join("truth.json");
        let json = serde_json::to_vec_pretty(self).expect("world serializes");
        std::fs::write(&truth_path, json).map_err(|e| SynthError::Io {
            path: truth_path,
            source: e,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::distribution_triple;

    fn small_config() -> WorldConfig {
        WorldConfig {
            n_counties: 12,
            first_year: 2003,
            last_year: 2008,
            seed: 7,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = SyntheticWorld::generate(small_config()).unwrap();
        let b = SyntheticWorld::generate(small_config()).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.yield_obs.to_bits(), y.yield_obs.to_bits());
        }
        let ca = a.cube(3, 2005);
        let cb = b.cube(3, 2005);
        assert_eq!(ca, cb);
    }

    #[test]
    fn degenerate_world_has_constant_yields() {
        let config = WorldConfig {
            noise_sd: 0.0,
            trend_per_year: 0.0,
            fertility_sd: 0.0,
            weather_sd: 0.0,
            ..small_config()
        };
        let world = SyntheticWorld::generate(config).unwrap();
        let first = world.records[0].yield_obs;
        for r in &world.records {
            assert!((r.yield_obs - first).abs() < 1e-12);
            assert_eq!(r.yield_true, r.yield_obs);
        }
    }

    #[test]
    fn quantile_triples_are_strictly_ordered_for_sampled_cells() {
        let world = SyntheticWorld::generate(small_config()).unwrap();
        let mut total = 0usize;
        let mut strict = 0usize;
        for c in 0..4 {
            let cube = world.cube(c, 2004);
            for t in 0..cube.t_steps {
                for b in 0..cube.bands {
                    let vals: Vec<f64> = cube
                        .band_step_values(b, t)
                        .into_iter()
                        .map(|v| v as f64)
                        .collect();
                    if vals.len() < 3 {
                        continue;
                    }
                    total += 1;
                    let tri = distribution_triple(&vals);
                    if tri.q20 < tri.median && tri.median < tri.q80 {
                        strict += 1;
                    }
                }
            }
        }
        assert!(total > 100);
        assert!(
            strict as f64 >= 0.99 * total as f64,
            "only {strict}/{total} strictly ordered"
        );
    }

    #[test]
    fn yearly_means_recover_the_trend() {
        let config = WorldConfig {
            n_counties: 150,
            ..WorldConfig::default()
        };
        let world = SyntheticWorld::generate(config.clone()).unwrap();
        // regress yearly mean on year
        let points: Vec<(f64, f64)> = world
            .years()
            .map(|y| {
                let vals: Vec<f64> = world
                    .records
                    .iter()
                    .filter(|r| r.year == y)
                    .map(|r| r.yield_obs)
                    .collect();
                (y as f64, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let resid: f64 = points
            .iter()
            .map(|p| {
                let pred = my + slope * (p.0 - mx);
                (p.1 - pred) * (p.1 - pred)
            })
            .sum();
        let se = (resid / (n - 2.0) / sxx).sqrt();
        assert!(
            (slope - config.trend_per_year).abs() <= 2.0 * se,
            "slope {slope} vs trend {} (se {se})",
            config.trend_per_year
        );
    }

    #[test]
    fn noiseless_record_explains_observed_yields() {
        let world = SyntheticWorld::generate(WorldConfig {
            n_counties: 200,
            ..WorldConfig::default()
        })
        .unwrap();
        let mean_obs =
            world.records.iter().map(|r| r.yield_obs).sum::<f64>() / world.records.len() as f64;
        let ss_res: f64 = world
            .records
            .iter()
            .map(|r| (r.yield_obs - r.yield_true) * (r.yield_obs - r.yield_true))
            .sum();
        let ss_tot: f64 = world
            .records
            .iter()
            .map(|r| (r.yield_obs - mean_obs) * (r.yield_obs - mean_obs))
            .sum();
        let bayes_r2 = 1.0 - ss_res / ss_tot;
        assert!(bayes_r2 >= 0.9, "bayes r2 {bayes_r2}");
    }

    #[test]
    fn step_masking_hits_roughly_ten_percent() {
        let world = SyntheticWorld::generate(small_config()).unwrap();
        let mut masked = 0usize;
        let mut total = 0usize;
        for c in 0..world.counties.len() {
            for year in world.years() {
                let cube = world.cube(c, year);
                for t in 0..cube.t_steps {
                    total += 1;
                    if cube.valid_pixel_count(t) == 0 {
                        masked += 1;
                    }
                }
            }
        }
        let frac = masked as f64 / total as f64;
        assert!((0.05..0.16).contains(&frac), "masked fraction {frac}");
    }

    #[test]
    fn written_world_round_trips() {
        let config = WorldConfig {
            n_counties: 3,
            first_year: 2010,
            last_year: 2011,
            t_steps: 19,
            seed: 5,
            ..WorldConfig::default()
        };
        let world = SyntheticWorld::generate(config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        world.write_to_dir(dir.path()).unwrap();
        let cube_dir = dir.path().join(format!("{}_2010", world.counties[1].county_id));
        let loaded = crate::raster::load_cube(&cube_dir).unwrap();
        assert_eq!(loaded, world.cube(1, 2010));
        let mask = crate::raster::load_mask(&cube_dir, loaded.height, loaded.width)
            .unwrap()
            .unwrap();
        assert_eq!(mask, world.mask(1));
        assert!(dir.path().join("yields.csv").exists());
        assert!(dir.path().join("counties.csv").exists());
        assert!(dir.path().join("truth.json").exists());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = WorldConfig::default();
        c.n_counties = 0;
        assert!(SyntheticWorld::generate(c).is_err());
        let mut c = WorldConfig::default();
        c.t_steps = 20;
        assert!(SyntheticWorld::generate(c).is_err());
        let mut c = WorldConfig::default();
        c.noise_sd = -1.0;
        assert!(SyntheticWorld::generate(c).is_err());
    }
}
