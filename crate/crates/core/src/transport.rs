//! Flux transport: differential rotation, meridional flow, stochastic
//! supergranular diffusion with a high-field shutoff, and daily random
//! background flux emergence.
//!
//! One [`step`] advances a map by `dt` seconds, applying the four processes
//! in a fixed order so runs are reproducible.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::map::SynopticMap;
use crate::rng::{StepStream, StreamDomain};

/// Seconds per day; the emergence level is specified per day.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Sidereal Carrington rotation period, days.
pub const CARRINGTON_SIDEREAL_DAYS: f64 = 25.38;

/// Physical parameters of the transport model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    /// Differential rotation coefficients, microradians/second.
    pub rot_a: f64,
    pub rot_b: f64,
    pub rot_c: f64,
    /// Rotation rate of the working frame, microradians/second.
    pub frame_rate: f64,
    /// Meridional flow amplitude, m/s.
    pub flow_amp: f64,
    /// Exponents of |sin theta| and |cos theta| in the flow profile.
    pub flow_exp_sin: f64,
    pub flow_exp_cos: f64,
    /// Solar radius, meters.
    pub solar_radius: f64,
    /// Supergranular diffusion coefficient, km^2/s.
    pub diffusion_coeff: f64,
    /// Diffusion is suppressed at or above this field strength, gauss.
    pub shutoff_gauss: f64,
    /// Target absolute mean of the daily per-pixel emergence, gauss/day.
    pub emergence_abs_mean: f64,
    /// Step length, seconds.
    pub dt: f64,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            // Komm rotation coefficients.
            rot_a: 2.913,
            rot_b: -0.405,
            rot_c: -0.422,
            frame_rate: carrington_frame_rate(),
            flow_amp: 8.0,
            flow_exp_sin: 0.3,
            flow_exp_cos: 0.1,
            solar_radius: 6.957e8,
            diffusion_coeff: 300.0,
            shutoff_gauss: 50.0,
            emergence_abs_mean: 2.1,
            dt: SECONDS_PER_DAY,
        }
    }
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::usage("dt must be > 0"));
        }
        if !(self.shutoff_gauss > 0.0) {
            return Err(Error::usage("shutoff_gauss must be > 0"));
        }
        if !(self.emergence_abs_mean >= 0.0) {
            return Err(Error::usage("emergence_abs_mean must be >= 0"));
        }
        if !(self.diffusion_coeff >= 0.0) {
            return Err(Error::usage("diffusion_coeff must be >= 0"));
        }
        if !(self.solar_radius > 0.0) {
            return Err(Error::usage("solar_radius must be > 0"));
        }
        Ok(())
    }

    /// Standard deviation of the per-step emergence increment, gauss.
    ///
    /// A centered Gaussian has E|X| = sigma * sqrt(2/pi), so the daily
    /// target absolute mean `m` needs sigma = m * sqrt(pi/2); sub-daily
    /// steps scale by sqrt(dt/day) so the daily aggregate keeps that level.
    pub fn emergence_sigma(&self) -> f64 {
        self.emergence_abs_mean
            * (std::f64::consts::PI / 2.0).sqrt()
            * (self.dt / SECONDS_PER_DAY).sqrt()
    }

    /// Per-axis standard deviation of the supergranular random-walk
    /// displacement, radians.
    pub fn diffusion_sigma(&self) -> f64 {
        let d_m2 = self.diffusion_coeff * 1.0e6;
        (2.0 * d_m2 * self.dt).sqrt() / self.solar_radius
    }
}

/// Rotation rate of the working frame matching the sidereal Carrington
/// period, microradians/second.
pub fn carrington_frame_rate() -> f64 {
    std::f64::consts::TAU / (CARRINGTON_SIDEREAL_DAYS * SECONDS_PER_DAY) * 1.0e6
}

/// Sidereal rotation rate at latitude `theta`, microradians/second.
pub fn rotation_rate(theta: f64, p: &TransportParams) -> f64 {
    let s2 = theta.sin() * theta.sin();
    p.rot_a + p.rot_b * s2 + p.rot_c * s2 * s2
}

/// Meridional flow rate at latitude `theta`, m/s, signed away from the
/// Equator.
pub fn meridional_rate(theta: f64, p: &TransportParams) -> f64 {
    let speed =
        p.flow_amp * theta.sin().abs().powf(p.flow_exp_sin) * theta.cos().abs().powf(p.flow_exp_cos);
    speed * theta.signum()
}

/// Shift one periodic row by `shift` pixels with linear interpolation.
fn shift_row_periodic(row: &[f64], shift: f64, out: &mut [f64]) {
    let n = row.len() as i64;
    for (j, out_v) in out.iter_mut().enumerate() {
        let pos = j as f64 - shift;
        let base = pos.floor();
        let frac = pos - base;
        let j0 = (base as i64).rem_euclid(n) as usize;
        let j1 = (base as i64 + 1).rem_euclid(n) as usize;
        *out_v = (1.0 - frac) * row[j0] + frac * row[j1];
    }
}

/// Advance the map under differential rotation relative to the working
/// frame. Each row shifts rigidly, so per-row signed sums are preserved.
pub fn advect_rotation(map: &SynopticMap, p: &TransportParams) -> SynopticMap {
    let grid = map.grid();
    let mut out = SynopticMap::zeros(grid);
    let d_phi = grid.d_phi();
    for i in 0..grid.n_lat() {
        let rate = (rotation_rate(grid.theta(i), p) - p.frame_rate) * 1.0e-6;
        let shift = rate * p.dt / d_phi;
        let start = grid.index(i, 0);
        let end = start + grid.n_lon();
        shift_row_periodic(
            &map.data()[start..end],
            shift,
            &mut out.data_mut()[start..end],
        );
    }
    out
}

/// Advance the map under the meridional flow with a semi-Lagrangian update
/// in latitude. Departure points beyond the polar row centers clamp to the
/// boundary row; the flow itself vanishes at the Poles.
pub fn advect_meridional(map: &SynopticMap, p: &TransportParams) -> SynopticMap {
    let grid = map.grid();
    let mut out = SynopticMap::zeros(grid);
    let n_lat = grid.n_lat();
    let d_theta = grid.d_theta();
    for i in 0..n_lat {
        let displacement = meridional_rate(grid.theta(i), p) * p.dt / p.solar_radius;
        let pos = i as f64 - displacement / d_theta;
        let base = pos.floor();
        let frac = pos - base;
        let i0 = (base as i64).clamp(0, n_lat as i64 - 1) as usize;
        let i1 = (base as i64 + 1).clamp(0, n_lat as i64 - 1) as usize;
        for j in 0..grid.n_lon() {
            let v = (1.0 - frac) * map.get(i0, j) + frac * map.get(i1, j);
            out.set(i, j, v);
        }
    }
    out
}

/// One supergranular random-walk step.
///
/// Flux in every pixel below the shutoff is displaced by an isotropic
/// Gaussian angular offset and splatted bilinearly onto the four
/// surrounding cells (longitude periodic, latitude clamped). Deposits are
/// made in flux units, so the area-weighted signed total is conserved.
/// Pixels at or above the shutoff stay in place but may receive deposits.
pub fn supergranular_step(
    map: &SynopticMap,
    p: &TransportParams,
    stream: StepStream,
) -> SynopticMap {
    let sigma = p.diffusion_sigma();
    if sigma == 0.0 {
        return map.clone();
    }
    let grid = map.grid();
    let n_lat = grid.n_lat();
    let n_lon = grid.n_lon() as i64;
    let d_theta = grid.d_theta();
    let d_phi = grid.d_phi();
    let mut out = map.clone();
    let normal = StandardNormal;
    for i in 0..n_lat {
        let w_src = grid.area_weight(i);
        for j in 0..grid.n_lon() {
            let b = map.get(i, j);
            if b.abs() >= p.shutoff_gauss {
                continue;
            }
            let idx = grid.index(i, j);
            let mut rng = stream.pixel(StreamDomain::Diffusion, idx as u64);
            let d_lat: f64 = normal.sample(&mut rng);
            let d_lon: f64 = normal.sample(&mut rng);

            out.data_mut()[idx] -= b;
            let flux = b * w_src;

            // Fractional destination in row/column units.
            let ri = i as f64 + sigma * d_lat / d_theta;
            let cj = j as f64 + sigma * d_lon / d_phi;
            let rb = ri.floor();
            let cb = cj.floor();
            let fr = ri - rb;
            let fc = cj - cb;
            let i0 = (rb as i64).clamp(0, n_lat as i64 - 1) as usize;
            let i1 = (rb as i64 + 1).clamp(0, n_lat as i64 - 1) as usize;
            let j0 = (cb as i64).rem_euclid(n_lon) as usize;
            let j1 = (cb as i64 + 1).rem_euclid(n_lon) as usize;

            for (ti, tj, wt) in [
                (i0, j0, (1.0 - fr) * (1.0 - fc)),
                (i0, j1, (1.0 - fr) * fc),
                (i1, j0, fr * (1.0 - fc)),
                (i1, j1, fr * fc),
            ] {
                let t = grid.index(ti, tj);
                out.data_mut()[t] += flux * wt / grid.area_weight(ti);
            }
        }
    }
    out
}

/// Add zero-mean Gaussian background flux at every pixel.
pub fn random_emergence(
    map: &SynopticMap,
    p: &TransportParams,
    stream: StepStream,
) -> SynopticMap {
    let sigma = p.emergence_sigma();
    if sigma == 0.0 {
        return map.clone();
    }
    let mut out = map.clone();
    let normal = StandardNormal;
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let mut rng = stream.pixel(StreamDomain::Emergence, idx as u64);
        let n: f64 = normal.sample(&mut rng);
        *v += sigma * n;
    }
    out
}

/// One full transport step: rotation, meridional flow, supergranular
/// diffusion, emergence, in that order.
pub fn step(map: &SynopticMap, p: &TransportParams, stream: StepStream) -> SynopticMap {
    let m = advect_rotation(map, p);
    let m = advect_meridional(&m, p);
    let m = supergranular_step(&m, p, stream);
    random_emergence(&m, p, stream)
}
