//! Run configuration: defaults, `key = value` file parsing, and the
//! resolved-config echo emitted with every run.
//!
//! Angles are configured in degrees and stored as given, so the resolved
//! echo reparses to an identical configuration; conversions to radians
//! happen where the values are consumed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::assim::{AssimConfig, Method};
use crate::error::{Error, Result};
use crate::grid::{Grid, LocalizationParams};
use crate::obs::{NoiseModel, ObserverGeometry};
use crate::transport::{TransportParams, SECONDS_PER_DAY};

/// Synodic Carrington rotation period, days; sets how fast the sub-Earth
/// point sweeps the map.
pub const CARRINGTON_SYNODIC_DAYS: f64 = 27.2753;

/// All physical, assimilation, and experiment parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_lat: usize,
    pub n_lon: usize,
    /// Ensemble size.
    pub k: usize,
    pub seed: u64,
    pub transport: TransportParams,
    /// Total simulated time, seconds.
    pub duration_seconds: f64,
    /// Time between observation epochs, seconds; must be a multiple of dt.
    pub obs_cadence_seconds: f64,
    /// Analysis method; `None` runs the no-assimilation baseline.
    pub method: Option<Method>,
    pub rho: f64,
    /// Latitudinal localization radius, degrees.
    pub r_theta_deg: f64,
    /// Longitudinal localization radius at the Equator, degrees.
    pub loc_base_deg: f64,
    /// Radius growth toward `loc_theta_max_deg`, degrees.
    pub loc_growth_deg: f64,
    /// Latitude where the longitudinal radius saturates, degrees.
    pub loc_theta_max_deg: f64,
    pub inflate_unobserved: bool,
    pub limb_cutoff_mu: f64,
    pub noise: NoiseModel,
    pub sub_earth_lat_deg: f64,
    pub sub_earth_lon0_deg: f64,
    pub synodic_period_days: f64,
    /// Correlation length of the initialization noise, degrees.
    pub init_corr_deg: f64,
    /// Area-weighted RMS amplitude of the initial maps, gauss.
    pub init_amp: f64,
    /// Emit mean/std/error maps every N epochs (0 = first and last only).
    pub map_output_every_epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_lat: 180,
            n_lon: 360,
            k: 16,
            seed: 42,
            transport: TransportParams::default(),
            duration_seconds: 60.0 * SECONDS_PER_DAY,
            obs_cadence_seconds: SECONDS_PER_DAY,
            method: None,
            rho: 1.5,
            r_theta_deg: 3.0,
            loc_base_deg: 3.0,
            loc_growth_deg: 12.0,
            loc_theta_max_deg: 85.0,
            inflate_unobserved: false,
            limb_cutoff_mu: 0.1,
            noise: NoiseModel::default(),
            sub_earth_lat_deg: 0.0,
            sub_earth_lon0_deg: 0.0,
            synodic_period_days: CARRINGTON_SYNODIC_DAYS,
            init_corr_deg: 10.0,
            init_amp: 5.0,
            map_output_every_epochs: 0,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_lat, self.n_lon)
    }

    /// Number of observation epochs in the configured duration.
    pub fn n_epochs(&self) -> usize {
        (self.duration_seconds / self.obs_cadence_seconds).round() as usize
    }

    /// Transport steps between observation epochs.
    pub fn steps_per_epoch(&self) -> usize {
        (self.obs_cadence_seconds / self.transport.dt).round() as usize
    }

    pub fn localization(&self) -> LocalizationParams {
        LocalizationParams {
            base: self.loc_base_deg.to_radians(),
            growth: self.loc_growth_deg.to_radians(),
            theta_max: self.loc_theta_max_deg.to_radians(),
        }
    }

    /// Assimilation settings for `method`, sharing the configured inflation
    /// and localization.
    pub fn assim_config_for(&self, method: Method) -> AssimConfig {
        AssimConfig {
            method,
            rho: self.rho,
            r_theta: self.r_theta_deg.to_radians(),
            loc: self.localization(),
            inflate_unobserved: self.inflate_unobserved,
        }
    }

    pub fn assim_config(&self) -> Option<AssimConfig> {
        self.method.map(|m| self.assim_config_for(m))
    }

    pub fn observer_geometry(&self, time_seconds: f64) -> ObserverGeometry {
        let rate = std::f64::consts::TAU / (self.synodic_period_days * SECONDS_PER_DAY);
        ObserverGeometry {
            sub_earth_longitude: (self.sub_earth_lon0_deg.to_radians() + rate * time_seconds)
                .rem_euclid(std::f64::consts::TAU),
            sub_earth_latitude: self.sub_earth_lat_deg.to_radians(),
            limb_cutoff_mu: self.limb_cutoff_mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.k < 2 {
            return Err(Error::usage(format!(
                "ensemble size k must be >= 2, got {}",
                self.k
            )));
        }
        self.transport.validate()?;
        if !(self.duration_seconds >= 0.0) {
            return Err(Error::usage("duration_seconds must be >= 0"));
        }
        if !(self.obs_cadence_seconds > 0.0) {
            return Err(Error::usage("obs_cadence_seconds must be > 0"));
        }
        let ratio = self.obs_cadence_seconds / self.transport.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::usage(
                "obs_cadence_seconds must be a positive multiple of dt_seconds",
            ));
        }
        // Assimilation settings are validated regardless of the active
        // method so a bad config fails early either way.
        self.assim_config_for(Method::Letkf).validate()?;
        if !(self.limb_cutoff_mu > 0.0 && self.limb_cutoff_mu < 1.0) {
            return Err(Error::usage("limb_cutoff_mu must be in (0, 1)"));
        }
        if !(self.noise.sigma_floor >= 0.0)
            || !(self.noise.relative_error >= 0.0)
            || !(self.noise.limb_exponent >= 0.0)
        {
            return Err(Error::usage("noise parameters must be >= 0"));
        }
        if !(self.synodic_period_days > 0.0) {
            return Err(Error::usage("synodic_period_days must be > 0"));
        }
        if !(self.init_corr_deg >= 0.0) || !(self.init_amp >= 0.0) {
            return Err(Error::usage("initialization parameters must be >= 0"));
        }
        Ok(())
    }

    /// Echo of every resolved value; reparses to an identical config.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            writeln!(out, "{key} = {value}").expect("writing to string");
        };
        put("n_lat", self.n_lat.to_string());
        put("n_lon", self.n_lon.to_string());
        put("k", self.k.to_string());
        put("seed", self.seed.to_string());
        put("dt_seconds", format!("{:.16e}", self.transport.dt));
        put("duration_seconds", format!("{:.16e}", self.duration_seconds));
        put(
            "obs_cadence_seconds",
            format!("{:.16e}", self.obs_cadence_seconds),
        );
        put("rot_a_urad_s", format!("{:.16e}", self.transport.rot_a));
        put("rot_b_urad_s", format!("{:.16e}", self.transport.rot_b));
        put("rot_c_urad_s", format!("{:.16e}", self.transport.rot_c));
        put(
            "frame_rate_urad_s",
            format!("{:.16e}", self.transport.frame_rate),
        );
        put("flow_amp_m_s", format!("{:.16e}", self.transport.flow_amp));
        put("flow_exp_sin", format!("{:.16e}", self.transport.flow_exp_sin));
        put("flow_exp_cos", format!("{:.16e}", self.transport.flow_exp_cos));
        put("solar_radius_m", format!("{:.16e}", self.transport.solar_radius));
        put(
            "diffusion_km2_s",
            format!("{:.16e}", self.transport.diffusion_coeff),
        );
        put("shutoff_gauss", format!("{:.16e}", self.transport.shutoff_gauss));
        put(
            "emergence_gauss_per_day",
            format!("{:.16e}", self.transport.emergence_abs_mean),
        );
        put(
            "method",
            self.method.map_or("none".to_string(), |m| m.to_string()),
        );
        put("rho", format!("{:.16e}", self.rho));
        put("r_theta_deg", format!("{:.16e}", self.r_theta_deg));
        put("loc_base_deg", format!("{:.16e}", self.loc_base_deg));
        put("loc_growth_deg", format!("{:.16e}", self.loc_growth_deg));
        put("loc_theta_max_deg", format!("{:.16e}", self.loc_theta_max_deg));
        put("inflate_unobserved", self.inflate_unobserved.to_string());
        put("limb_cutoff_mu", format!("{:.16e}", self.limb_cutoff_mu));
        put("noise_relative", format!("{:.16e}", self.noise.relative_error));
        put(
            "noise_floor_gauss",
            format!("{:.16e}", self.noise.sigma_floor),
        );
        put("limb_exponent", format!("{:.16e}", self.noise.limb_exponent));
        put("sub_earth_lat_deg", format!("{:.16e}", self.sub_earth_lat_deg));
        put("sub_earth_lon0_deg", format!("{:.16e}", self.sub_earth_lon0_deg));
        put(
            "synodic_period_days",
            format!("{:.16e}", self.synodic_period_days),
        );
        put("init_corr_deg", format!("{:.16e}", self.init_corr_deg));
        put("init_amp_gauss", format!("{:.16e}", self.init_amp));
        put(
            "map_output_every_epochs",
            self.map_output_every_epochs.to_string(),
        );
        out
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        Error::usage(format!(
            "line {line}: cannot parse value `{value}` for key `{key}`"
        ))
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::usage(format!(
            "line {line}: cannot parse boolean `{value}` for key `{key}`"
        ))),
    }
}

/// Parse `key = value` configuration text over the defaults. Blank lines
/// and `#` comments are ignored; unknown keys are rejected.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::usage(format!(
                "line {line_no}: expected `key = value`, got `{raw}`"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "n_lat" => cfg.n_lat = parse_value(key, value, line_no)?,
            "n_lon" => cfg.n_lon = parse_value(key, value, line_no)?,
            "k" => cfg.k = parse_value(key, value, line_no)?,
            "seed" => cfg.seed = parse_value(key, value, line_no)?,
            "dt_seconds" => cfg.transport.dt = parse_value(key, value, line_no)?,
            "duration_seconds" => cfg.duration_seconds = parse_value(key, value, line_no)?,
            "obs_cadence_seconds" => {
                cfg.obs_cadence_seconds = parse_value(key, value, line_no)?
            }
            "rot_a_urad_s" => cfg.transport.rot_a = parse_value(key, value, line_no)?,
            "rot_b_urad_s" => cfg.transport.rot_b = parse_value(key, value, line_no)?,
            "rot_c_urad_s" => cfg.transport.rot_c = parse_value(key, value, line_no)?,
            "frame_rate_urad_s" => cfg.transport.frame_rate = parse_value(key, value, line_no)?,
            "flow_amp_m_s" => cfg.transport.flow_amp = parse_value(key, value, line_no)?,
            "flow_exp_sin" => cfg.transport.flow_exp_sin = parse_value(key, value, line_no)?,
            "flow_exp_cos" => cfg.transport.flow_exp_cos = parse_value(key, value, line_no)?,
            "solar_radius_m" => cfg.transport.solar_radius = parse_value(key, value, line_no)?,
            "diffusion_km2_s" => {
                cfg.transport.diffusion_coeff = parse_value(key, value, line_no)?
            }
            "shutoff_gauss" => cfg.transport.shutoff_gauss = parse_value(key, value, line_no)?,
            "emergence_gauss_per_day" => {
                cfg.transport.emergence_abs_mean = parse_value(key, value, line_no)?
            }
            "method" => {
                cfg.method = match value {
                    "none" => None,
                    other => Some(
                        other
                            .parse()
                            .map_err(|e| Error::usage(format!("line {line_no}: {e}")))?,
                    ),
                }
            }
            "rho" => cfg.rho = parse_value(key, value, line_no)?,
            "r_theta_deg" => cfg.r_theta_deg = parse_value(key, value, line_no)?,
            "loc_base_deg" => cfg.loc_base_deg = parse_value(key, value, line_no)?,
            "loc_growth_deg" => cfg.loc_growth_deg = parse_value(key, value, line_no)?,
            "loc_theta_max_deg" => cfg.loc_theta_max_deg = parse_value(key, value, line_no)?,
            "inflate_unobserved" => cfg.inflate_unobserved = parse_bool(key, value, line_no)?,
            "limb_cutoff_mu" => cfg.limb_cutoff_mu = parse_value(key, value, line_no)?,
            "noise_relative" => cfg.noise.relative_error = parse_value(key, value, line_no)?,
            "noise_floor_gauss" => cfg.noise.sigma_floor = parse_value(key, value, line_no)?,
            "limb_exponent" => cfg.noise.limb_exponent = parse_value(key, value, line_no)?,
            "sub_earth_lat_deg" => cfg.sub_earth_lat_deg = parse_value(key, value, line_no)?,
            "sub_earth_lon0_deg" => cfg.sub_earth_lon0_deg = parse_value(key, value, line_no)?,
            "synodic_period_days" => {
                cfg.synodic_period_days = parse_value(key, value, line_no)?
            }
            "init_corr_deg" => cfg.init_corr_deg = parse_value(key, value, line_no)?,
            "init_amp_gauss" => cfg.init_amp = parse_value(key, value, line_no)?,
            "map_output_every_epochs" => {
                cfg.map_output_every_epochs = parse_value(key, value, line_no)?
            }
            unknown => {
                return Err(Error::usage(format!(
                    "line {line_no}: unknown configuration key `{unknown}`"
                )))
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}
