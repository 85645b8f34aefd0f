//! Analysis kernels: global ETKF, localized LETKF, and pixel-wise ENLS.
//!
//! ETKF and LETKF solve the Kalman update in ensemble weight space. With
//! anomaly matrices `X_f` (state) and `Y_f` (simulated observations), the
//! weight-space analysis is
//!
//! ```text
//! P = [(k-1) I + Y_f' R^-1 Y_f]^-1
//! w = P Y_f' R^-1 (y_obs - y_mean)
//! ```
//!
//! and members are rebuilt from the symmetric square root of `(k-1) P`.
//! The LETKF repeats the solve per pixel using only observations inside
//! that pixel's elliptical localization region. ENLS is a scalar
//! variance-weighted blend applied to directly observed pixels only.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{
    anomaly_matrix, ensemble_mean, ensemble_std, inflate, simulate_observations, Ensemble,
};
use crate::error::{Error, Result};
use crate::grid::{candidate_columns, candidate_rows, local_region, LocalizationParams};
use crate::map::SynopticMap;
use crate::obs::ObservationSet;

/// Analysis kernel selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Enls,
    Etkf,
    Letkf,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enls" => Ok(Method::Enls),
            "etkf" => Ok(Method::Etkf),
            "letkf" => Ok(Method::Letkf),
            other => Err(Error::usage(format!(
                "unknown method `{other}` (expected enls, etkf, or letkf)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Enls => "enls",
            Method::Etkf => "etkf",
            Method::Letkf => "letkf",
        })
    }
}

/// Assimilation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssimConfig {
    pub method: Method,
    /// Multiplicative inflation factor, applied once per epoch to state and
    /// observation ensembles alike (ETKF/LETKF only).
    pub rho: f64,
    /// Latitudinal localization radius, radians (LETKF).
    pub r_theta: f64,
    /// Longitudinal localization radius profile (LETKF).
    pub loc: LocalizationParams,
    /// When false, pixels with no local observations keep their uninflated
    /// forecast values.
    pub inflate_unobserved: bool,
}

impl AssimConfig {
    pub fn new(method: Method) -> Self {
        AssimConfig {
            method,
            rho: 1.5,
            r_theta: crate::grid::DEFAULT_R_THETA,
            loc: LocalizationParams::default(),
            inflate_unobserved: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::usage(format!(
                "inflation factor rho must be > 0, got {}",
                self.rho
            )));
        }
        if !(self.r_theta > 0.0) {
            return Err(Error::usage("r_theta must be > 0"));
        }
        self.loc.validate()?;
        if self.loc.base < self.r_theta {
            return Err(Error::usage(
                "longitudinal localization base must be >= r_theta",
            ));
        }
        Ok(())
    }
}

/// Weight-space analysis: mean weights, weight covariance, and the
/// symmetric square root used to rebuild members.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSolution {
    pub w_bar: DVector<f64>,
    pub p_tilde: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

/// Symmetric square root of a symmetric positive semidefinite matrix via
/// eigendecomposition. Eigenvalues within `-1e-10 * ||M||` of zero are
/// clamped to zero; anything lower is an error.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::usage(format!(
            "symmetric_sqrt needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    let norm = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if norm == 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    let asym = (m - m.transpose())
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if asym > 1e-10 * norm {
        return Err(Error::numeric(format!(
            "matrix is not symmetric: max |M - M'| = {asym:.3e} vs norm {norm:.3e}"
        )));
    }
    let sym = (m + m.transpose()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let tol = 1e-10 * norm;
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -tol {
            return Err(Error::numeric(format!(
                "matrix is indefinite: eigenvalue {:.6e} below -{tol:.3e}",
                *v
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((&s + s.transpose()).scale(0.5))
}

/// Solve the weight-space Kalman update.
///
/// `y_anom` is the `n_obs x k` observation anomaly matrix, `r_var` the
/// diagonal observation error variances, and `innovation` the observed
/// values minus the simulated observation mean.
pub fn w_space_analysis(
    y_anom: &DMatrix<f64>,
    r_var: &[f64],
    innovation: &DVector<f64>,
    k: usize,
) -> Result<AnalysisSolution> {
    let n_obs = y_anom.nrows();
    if y_anom.ncols() != k || r_var.len() != n_obs || innovation.len() != n_obs {
        return Err(Error::usage(format!(
            "inconsistent analysis dimensions: Y {}x{}, R {}, innovation {}, k {}",
            n_obs,
            y_anom.ncols(),
            r_var.len(),
            innovation.len(),
            k
        )));
    }
    if let Some(&bad) = r_var.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::usage(format!(
            "observation error variances must be > 0, got {bad}"
        )));
    }
    let km1 = (k - 1) as f64;
    if n_obs == 0 {
        return Ok(AnalysisSolution {
            w_bar: DVector::zeros(k),
            p_tilde: DMatrix::identity(k, k).scale(1.0 / km1),
            omega: DMatrix::identity(k, k),
        });
    }

    // C = Y' R^-1 (k x n_obs).
    let mut c = y_anom.transpose();
    for (col_idx, mut col) in c.column_iter_mut().enumerate() {
        col /= r_var[col_idx];
    }
    let mut a = &c * y_anom;
    for d in 0..k {
        a[(d, d)] += km1;
    }
    let a = (&a + a.transpose()).scale(0.5);
    let eig = a.symmetric_eigen();
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::numeric(format!(
            "weight-space system matrix is not positive definite (eigenvalue {bad:.6e})"
        )));
    }
    let inv = DVector::from_iterator(k, eig.eigenvalues.iter().map(|v| 1.0 / v));
    let p_tilde =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    let p_tilde = (&p_tilde + p_tilde.transpose()).scale(0.5);
    let w_bar = &p_tilde * (&c * innovation);
    let omega = symmetric_sqrt(&p_tilde.scale(km1))?;
    Ok(AnalysisSolution {
        w_bar,
        p_tilde,
        omega,
    })
}

/// Rebuild analysis members from the forecast mean, forecast anomalies, and
/// a weight-space solution. Column `i` of the result is member `i`.
pub fn reconstruct_members(
    x_mean: &DVector<f64>,
    x_anom: &DMatrix<f64>,
    sol: &AnalysisSolution,
) -> DMatrix<f64> {
    let mut w = sol.omega.clone();
    for mut col in w.column_iter_mut() {
        col += &sol.w_bar;
    }
    let mut out = x_anom * w;
    for mut col in out.column_iter_mut() {
        col += x_mean;
    }
    out
}

fn obs_variances(obs: &ObservationSet) -> Vec<f64> {
    obs.records().iter().map(|r| r.sigma * r.sigma).collect()
}

fn ensemble_from_columns(grid: crate::grid::Grid, members: &DMatrix<f64>) -> Result<Ensemble> {
    let maps = members
        .column_iter()
        .map(|col| SynopticMap::from_data(grid, col.iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(maps)
}

/// Global ensemble transform Kalman filter: one weight-space solve over all
/// observed pixels, applied to every pixel of the map.
pub fn etkf_assimilate(e: &Ensemble, obs: &ObservationSet, cfg: &AssimConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let inflated = inflate(e, cfg.rho)?;
    if obs.is_empty() {
        return Ok(inflated);
    }
    let oe = simulate_observations(&inflated, obs)?;
    let y_anom = oe.anomalies();
    let innovation = DVector::from_iterator(
        obs.len(),
        obs.records()
            .iter()
            .zip(oe.mean().iter())
            .map(|(rec, m)| rec.value - m),
    );
    let sol = w_space_analysis(&y_anom, &obs_variances(obs), &innovation, e.k())?;

    let grid = e.grid();
    let all_pixels: Vec<usize> = (0..grid.n_pixels()).collect();
    let x_anom = anomaly_matrix(&inflated, &all_pixels)?;
    let x_mean = DVector::from_column_slice(ensemble_mean(&inflated).data());
    let members = reconstruct_members(&x_mean, &x_anom, &sol);
    ensemble_from_columns(grid, &members)
}

/// Observation record indices grouped by grid row, sorted by column.
struct ObsRowIndex {
    rows: Vec<Vec<(usize, usize)>>,
}

impl ObsRowIndex {
    fn build(grid: &crate::grid::Grid, obs: &ObservationSet) -> Self {
        let mut rows = vec![Vec::new(); grid.n_lat()];
        for (idx, rec) in obs.records().iter().enumerate() {
            rows[rec.row].push((rec.col, idx));
        }
        for row in &mut rows {
            row.sort_unstable();
        }
        ObsRowIndex { rows }
    }

    /// Visit observations in `row` whose column lies in the wrapped window
    /// `center +- half`.
    fn for_window(
        &self,
        row: usize,
        center: i64,
        half: i64,
        n_lon: i64,
        mut visit: impl FnMut(usize, usize),
    ) {
        let entries = &self.rows[row];
        if entries.is_empty() {
            return;
        }
        if 2 * half + 1 >= n_lon {
            for &(col, idx) in entries {
                visit(col, idx);
            }
            return;
        }
        let lo = (center - half).rem_euclid(n_lon) as usize;
        let hi = (center + half).rem_euclid(n_lon) as usize;
        let mut scan = |from: usize, to: usize| {
            let start = entries.partition_point(|&(c, _)| c < from);
            for &(col, idx) in &entries[start..] {
                if col > to {
                    break;
                }
                visit(col, idx);
            }
        };
        if lo <= hi {
            scan(lo, hi);
        } else {
            scan(lo, (n_lon - 1) as usize);
            scan(0, hi);
        }
    }
}

/// Local ensemble transform Kalman filter: an independent weight-space
/// solve per pixel, restricted to observations inside the pixel's
/// localization ellipse. Pixels with no local observations keep their
/// forecast values (uninflated unless `inflate_unobserved`).
pub fn letkf_assimilate(e: &Ensemble, obs: &ObservationSet, cfg: &AssimConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let inflated = inflate(e, cfg.rho)?;
    if obs.is_empty() {
        if cfg.inflate_unobserved {
            return Ok(inflated);
        }
        return Ok(e.clone());
    }

    let grid = e.grid();
    let k = e.k();
    let n_lon = grid.n_lon() as i64;
    let oe = simulate_observations(&inflated, obs)?;
    let y_full = oe.anomalies();
    let innovation_full: Vec<f64> = obs
        .records()
        .iter()
        .zip(oe.mean().iter())
        .map(|(rec, m)| rec.value - m)
        .collect();
    let r_var_full = obs_variances(obs);
    let index = ObsRowIndex::build(&grid, obs);
    let inflated_mean = ensemble_mean(&inflated);

    // Per-pixel analyses are independent; None marks pixels left at the
    // forecast.
    let updates: Vec<Option<Vec<f64>>> = (0..grid.n_pixels())
        .into_par_iter()
        .map(|pixel| -> Result<Option<Vec<f64>>> {
            let (i, j) = grid.from_index(pixel);
            let region = local_region(&grid, i, j, cfg.r_theta, &cfg.loc)?;

            let mut local = Vec::new();
            for row in candidate_rows(&grid, &region) {
                let Some((center, half)) = candidate_columns(&grid, &region, row) else {
                    continue;
                };
                let theta = grid.theta(row);
                index.for_window(row, center, half, n_lon, |col, rec_idx| {
                    if region.contains(theta, grid.phi(col)) {
                        local.push(rec_idx);
                    }
                });
            }
            if local.is_empty() {
                if cfg.inflate_unobserved {
                    let vals = inflated
                        .members()
                        .iter()
                        .map(|m| m.data()[pixel])
                        .collect();
                    return Ok(Some(vals));
                }
                return Ok(None);
            }

            let n_loc = local.len();
            let mut y_loc = DMatrix::zeros(n_loc, k);
            let mut innov = DVector::zeros(n_loc);
            let mut r_var = Vec::with_capacity(n_loc);
            for (out_row, &rec_idx) in local.iter().enumerate() {
                for col in 0..k {
                    y_loc[(out_row, col)] = y_full[(rec_idx, col)];
                }
                innov[out_row] = innovation_full[rec_idx];
                r_var.push(r_var_full[rec_idx]);
            }
            let sol = w_space_analysis(&y_loc, &r_var, &innov, k)?;

            let mean_p = inflated_mean.data()[pixel];
            let mut vals = Vec::with_capacity(k);
            for member in 0..k {
                let mut v = mean_p;
                for m in 0..k {
                    let anom = inflated.member(m).data()[pixel] - mean_p;
                    v += anom * (sol.w_bar[m] + sol.omega[(m, member)]);
                }
                vals.push(v);
            }
            Ok(Some(vals))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut members = e.members().to_vec();
    for (pixel, update) in updates.iter().enumerate() {
        if let Some(vals) = update {
            for (member, &v) in members.iter_mut().zip(vals) {
                member.data_mut()[pixel] = v;
            }
        }
    }
    Ensemble::new(members)
}

/// Scalar gain `sf^2 / (sf^2 + so^2)`, defined as 0 in the degenerate
/// all-zero case.
fn enls_gain(sigma_f: f64, sigma_obs: f64) -> f64 {
    let vf = sigma_f * sigma_f;
    let vo = sigma_obs * sigma_obs;
    if vf + vo == 0.0 {
        return 0.0;
    }
    vf / (vf + vo)
}

/// Ensemble least squares: each member of each directly observed pixel is
/// blended toward the observation by the ratio of forecast to total
/// variance. Unobserved pixels are untouched and no inflation is applied.
pub fn enls_assimilate(e: &Ensemble, obs: &ObservationSet, cfg: &AssimConfig) -> Result<Ensemble> {
    cfg.validate()?;
    if obs.grid() != e.grid() {
        return Err(Error::usage("observation grid does not match ensemble grid"));
    }
    let grid = e.grid();
    let std = ensemble_std(e);
    let mut out = e.clone();
    let mut degenerate = 0usize;
    for rec in obs.records() {
        let pixel = grid.index(rec.row, rec.col);
        let sigma_f = std.data()[pixel];
        if sigma_f == 0.0 && rec.sigma == 0.0 {
            degenerate += 1;
        }
        let gain = enls_gain(sigma_f, rec.sigma);
        for member in out.members_mut() {
            let x = member.data()[pixel];
            member.data_mut()[pixel] = x + gain * (rec.value - x);
        }
    }
    if degenerate > 0 {
        log::warn!("ENLS: {degenerate} pixels had zero forecast and observation variance; gain set to 0");
    }
    Ok(out)
}

/// Dispatch on the configured method.
pub fn assimilate(e: &Ensemble, obs: &ObservationSet, cfg: &AssimConfig) -> Result<Ensemble> {
    match cfg.method {
        Method::Enls => enls_assimilate(e, obs, cfg),
        Method::Etkf => etkf_assimilate(e, obs, cfg),
        Method::Letkf => letkf_assimilate(e, obs, cfg),
    }
}
