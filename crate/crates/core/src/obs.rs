//! Observations: Earth-side disk visibility, the limb-weighted noise model,
//! synthetic observation synthesis from a hidden truth map, and the text
//! observation file format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::map::SynopticMap;
use crate::rng::{StepStream, StreamDomain};

/// Smallest noise standard deviation recorded with an observation, gauss.
/// Keeps the diagonal observation covariance invertible even when the noise
/// model is configured to zero.
pub const SIGMA_RECORD_MIN: f64 = 1e-4;

/// One observed pixel: location, value (gauss), and noise standard
/// deviation (gauss).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsRecord {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub sigma: f64,
}

/// Sparse observation set for one epoch; the per-record sigmas form the
/// diagonal of the observation error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    grid: Grid,
    epoch_seconds: f64,
    records: Vec<ObsRecord>,
}

impl ObservationSet {
    pub fn new(grid: Grid, epoch_seconds: f64, records: Vec<ObsRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if rec.row >= grid.n_lat() || rec.col >= grid.n_lon() {
                return Err(Error::usage(format!(
                    "observation pixel ({}, {}) out of range for {}x{} grid",
                    rec.row,
                    rec.col,
                    grid.n_lat(),
                    grid.n_lon()
                )));
            }
            if !seen.insert((rec.row, rec.col)) {
                return Err(Error::usage(format!(
                    "duplicate observation pixel ({}, {})",
                    rec.row, rec.col
                )));
            }
            if !(rec.sigma > 0.0) {
                return Err(Error::usage(format!(
                    "observation sigma must be > 0, got {} at ({}, {})",
                    rec.sigma, rec.row, rec.col
                )));
            }
            if !rec.value.is_finite() || !rec.sigma.is_finite() {
                return Err(Error::usage("observation values must be finite"));
            }
        }
        Ok(ObservationSet {
            grid,
            epoch_seconds,
            records,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn epoch_seconds(&self) -> f64 {
        self.epoch_seconds
    }

    /// Same records stamped with a different epoch time.
    pub fn with_epoch(mut self, epoch_seconds: f64) -> Self {
        self.epoch_seconds = epoch_seconds;
        self
    }

    pub fn records(&self) -> &[ObsRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Earth-side viewing geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGeometry {
    /// Longitude of the sub-Earth point (central meridian), radians.
    pub sub_earth_longitude: f64,
    /// Latitude of the sub-Earth point, radians.
    pub sub_earth_latitude: f64,
    /// Minimum cosine of the heliocentric angle for a pixel to be visible.
    pub limb_cutoff_mu: f64,
}

impl Default for ObserverGeometry {
    fn default() -> Self {
        ObserverGeometry {
            sub_earth_longitude: 0.0,
            sub_earth_latitude: 0.0,
            limb_cutoff_mu: 0.1,
        }
    }
}

impl ObserverGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.limb_cutoff_mu > 0.0 && self.limb_cutoff_mu < 1.0) {
            return Err(Error::usage("limb_cutoff_mu must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Cosine of the angular distance between `(theta, phi)` and the sub-Earth
/// point on the unit sphere.
pub fn heliocentric_mu(geom: &ObserverGeometry, theta: f64, phi: f64) -> f64 {
    theta.sin() * geom.sub_earth_latitude.sin()
        + theta.cos() * geom.sub_earth_latitude.cos() * (phi - geom.sub_earth_longitude).cos()
}

/// All pixels with `mu > limb_cutoff_mu`, in row-major order.
pub fn visible_pixels(grid: &Grid, geom: &ObserverGeometry) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..grid.n_lat() {
        for j in 0..grid.n_lon() {
            if heliocentric_mu(geom, grid.theta(i), grid.phi(j)) > geom.limb_cutoff_mu {
                out.push((i, j));
            }
        }
    }
    out
}

/// Observation noise model: a relative error with a floor, amplified
/// toward the limb by an inverse power of mu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub relative_error: f64,
    pub sigma_floor: f64,
    pub limb_exponent: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            relative_error: 0.03,
            sigma_floor: 0.2,
            limb_exponent: 2.0,
        }
    }
}

/// Noise standard deviation for an observed value `b_obs` at disk position
/// `mu`.
pub fn noise_sigma(b_obs: f64, mu: f64, noise: &NoiseModel) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::usage(format!(
            "noise_sigma requires mu > 0 (pixel not visible), got {mu}"
        )));
    }
    Ok(noise.sigma_floor.max(noise.relative_error * b_obs.abs()) * mu.powf(-noise.limb_exponent))
}

/// Observe every visible pixel of `truth` with Gaussian noise from the
/// noise model. The recorded sigma is floored at [`SIGMA_RECORD_MIN`].
pub fn synthesize_observations(
    truth: &SynopticMap,
    geom: &ObserverGeometry,
    noise: &NoiseModel,
    stream: StepStream,
) -> Result<ObservationSet> {
    geom.validate()?;
    let grid = truth.grid();
    let normal = StandardNormal;
    let mut records = Vec::new();
    for (i, j) in visible_pixels(&grid, geom) {
        let mu = heliocentric_mu(geom, grid.theta(i), grid.phi(j));
        let b = truth.get(i, j);
        let sigma = noise_sigma(b, mu, noise)?;
        let idx = grid.index(i, j) as u64;
        let mut rng = stream.pixel(StreamDomain::ObsNoise, idx);
        let draw: f64 = normal.sample(&mut rng);
        records.push(ObsRecord {
            row: i,
            col: j,
            value: b + sigma * draw,
            sigma: sigma.max(SIGMA_RECORD_MIN),
        });
    }
    ObservationSet::new(grid, 0.0, records)
}

const OBS_MAGIC: &str = "OBS";
const OBS_VERSION: &str = "v1";

/// Write an observation set as line-based text:
/// `OBS v1 <n_lat> <n_lon> <epoch_seconds> <n_records>` then one
/// `row col value sigma` record per line.
pub fn write_observation_file(set: &ObservationSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "{} {} {} {} {:.16e} {}",
        OBS_MAGIC,
        OBS_VERSION,
        set.grid.n_lat(),
        set.grid.n_lon(),
        set.epoch_seconds,
        set.records.len()
    )
    .expect("writing to string");
    for rec in &set.records {
        writeln!(
            out,
            "{} {} {:.16e} {:.16e}",
            rec.row, rec.col, rec.value, rec.sigma
        )
        .expect("writing to string");
    }
    fs::write(path, out)?;
    Ok(())
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::format(path.display().to_string(), line, msg)
}

/// Read an observation file written by [`write_observation_file`].
/// Round-trips bit-exactly.
pub fn read_observation_file(path: &Path) -> Result<ObservationSet> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != OBS_MAGIC || fields[1] != OBS_VERSION {
        return Err(format_err(
            path,
            1,
            format!("expected header `{OBS_MAGIC} {OBS_VERSION} <n_lat> <n_lon> <epoch> <n>`"),
        ));
    }
    let n_lat: usize = fields[2]
        .parse()
        .map_err(|_| format_err(path, 1, "bad n_lat"))?;
    let n_lon: usize = fields[3]
        .parse()
        .map_err(|_| format_err(path, 1, "bad n_lon"))?;
    let epoch: f64 = fields[4]
        .parse()
        .map_err(|_| format_err(path, 1, "bad epoch"))?;
    let n_records: usize = fields[5]
        .parse()
        .map_err(|_| format_err(path, 1, "bad record count"))?;
    let grid = Grid::new(n_lat, n_lon)?;

    let mut records = Vec::with_capacity(n_records);
    let mut seen = HashSet::new();
    for (line_idx, line) in lines {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(format_err(
                path,
                line_no,
                format!("expected `row col value sigma`, got {} fields", fields.len()),
            ));
        }
        let row: usize = fields[0]
            .parse()
            .map_err(|_| format_err(path, line_no, "bad row index"))?;
        let col: usize = fields[1]
            .parse()
            .map_err(|_| format_err(path, line_no, "bad column index"))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| format_err(path, line_no, "bad value"))?;
        let sigma: f64 = fields[3]
            .parse()
            .map_err(|_| format_err(path, line_no, "bad sigma"))?;
        if row >= n_lat || col >= n_lon {
            return Err(format_err(
                path,
                line_no,
                format!("pixel ({row}, {col}) out of range"),
            ));
        }
        if !seen.insert((row, col)) {
            return Err(format_err(
                path,
                line_no,
                format!("duplicate pixel ({row}, {col})"),
            ));
        }
        if !value.is_finite() || !sigma.is_finite() {
            return Err(format_err(path, line_no, "non-finite value"));
        }
        if !(sigma > 0.0) {
            return Err(format_err(path, line_no, "sigma must be > 0"));
        }
        records.push(ObsRecord {
            row,
            col,
            value,
            sigma,
        });
    }
    if records.len() != n_records {
        return Err(format_err(
            path,
            1,
            format!("header claims {n_records} records, found {}", records.len()),
        ));
    }
    ObservationSet::new(grid, epoch, records)
}
