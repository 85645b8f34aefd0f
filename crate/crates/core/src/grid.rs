//! Equal-angle latitude–longitude grid and the elliptical localization
//! region used by the per-pixel analysis.
//!
//! Latitude rows run south to north: row 0 is the southernmost row. Pixel
//! centers sit at `theta_i = -pi/2 + (i + 1/2) * dtheta` and
//! `phi_j = (j + 1/2) * dphi`. Longitude is periodic; latitude is not.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Default latitudinal localization radius, 3 degrees.
pub const DEFAULT_R_THETA: f64 = PI / 60.0;

/// Equal-angle grid over the full sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_lat: usize,
    n_lon: usize,
}

impl Grid {
    pub fn new(n_lat: usize, n_lon: usize) -> Result<Self> {
        if n_lat == 0 || n_lon == 0 {
            return Err(Error::usage(format!(
                "grid dimensions must be positive, got {n_lat}x{n_lon}"
            )));
        }
        Ok(Grid { n_lat, n_lon })
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn n_pixels(&self) -> usize {
        self.n_lat * self.n_lon
    }

    /// Latitudinal spacing in radians.
    pub fn d_theta(&self) -> f64 {
        PI / self.n_lat as f64
    }

    /// Longitudinal spacing in radians.
    pub fn d_phi(&self) -> f64 {
        TAU / self.n_lon as f64
    }

    /// Latitude of the center of row `i` (unchecked).
    pub fn theta(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_lat);
        -PI / 2.0 + (i as f64 + 0.5) * self.d_theta()
    }

    /// Longitude of the center of column `j` (unchecked).
    pub fn phi(&self, j: usize) -> f64 {
        debug_assert!(j < self.n_lon);
        (j as f64 + 0.5) * self.d_phi()
    }

    /// Cell-center coordinates `(theta, phi)` of pixel `(i, j)`.
    pub fn pixel_coords(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        if i >= self.n_lat || j >= self.n_lon {
            return Err(Error::usage(format!(
                "pixel ({i}, {j}) out of range for {}x{} grid",
                self.n_lat, self.n_lon
            )));
        }
        Ok((self.theta(i), self.phi(j)))
    }

    /// Row-major flat index of pixel `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_lat && j < self.n_lon);
        i * self.n_lon + j
    }

    /// Inverse of [`Grid::index`].
    pub fn from_index(&self, idx: usize) -> (usize, usize) {
        debug_assert!(idx < self.n_pixels());
        (idx / self.n_lon, idx % self.n_lon)
    }

    /// Solid angle of a cell in row `i`, steradian.
    ///
    /// The exact spherical cell area `dphi * (sin(top) - sin(bottom))` is
    /// used instead of the midpoint form `cos(theta) dtheta dphi`; the two
    /// agree to O(dtheta^2) and the exact form sums to 4*pi for any grid.
    pub fn area_weight(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_lat);
        let half = 0.5 * self.d_theta();
        self.d_phi() * 2.0 * half.sin() * self.theta(i).cos()
    }
}

/// Wrapped longitudinal difference `a - b`, reduced to `(-pi, pi]`.
pub fn wrap_longitude(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % TAU;
    if d <= -PI {
        d += TAU;
    } else if d > PI {
        d -= TAU;
    }
    d
}

/// Parameters of the latitude-dependent longitudinal localization radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationParams {
    /// Longitudinal radius at the Equator, radians.
    pub base: f64,
    /// Additional radius gained from Equator to `theta_max`, radians.
    pub growth: f64,
    /// Latitude at which the radius saturates, radians.
    pub theta_max: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        // 3 + 12 |theta| / 85 degrees, saturating at 85 degrees.
        LocalizationParams {
            base: 3.0_f64.to_radians(),
            growth: 12.0_f64.to_radians(),
            theta_max: 85.0_f64.to_radians(),
        }
    }
}

impl LocalizationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0) {
            return Err(Error::usage("localization base radius must be > 0"));
        }
        if !(self.growth >= 0.0) {
            return Err(Error::usage("localization growth must be >= 0"));
        }
        if !(self.theta_max > 0.0 && self.theta_max <= PI / 2.0) {
            return Err(Error::usage("localization theta_max must be in (0, pi/2]"));
        }
        Ok(())
    }
}

/// Longitudinal localization radius at latitude `theta`.
///
/// Grows linearly from `base` at the Equator to `base + growth` at
/// `theta_max` and stays at that maximum closer to the Poles.
pub fn longitudinal_radius(theta: f64, params: &LocalizationParams) -> f64 {
    let t = theta.abs().min(params.theta_max);
    params.base + params.growth * t / params.theta_max
}

/// Elliptical pixel neighborhood centered on one pixel.
///
/// Membership is strict (`< 1` on the ellipse equation), symmetric in
/// latitude about the center, and periodic in longitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalRegion {
    pub center_theta: f64,
    pub center_phi: f64,
    pub r_theta: f64,
    pub r_phi: f64,
}

impl LocalRegion {
    pub fn new(center_theta: f64, center_phi: f64, r_theta: f64, r_phi: f64) -> Result<Self> {
        if !(r_theta > 0.0) {
            return Err(Error::usage("r_theta must be > 0"));
        }
        if !(r_phi >= r_theta) {
            return Err(Error::usage("r_phi must be >= r_theta"));
        }
        Ok(LocalRegion {
            center_theta,
            center_phi,
            r_theta,
            r_phi,
        })
    }

    /// Strict ellipse membership test with wrapped longitude.
    pub fn contains(&self, theta: f64, phi: f64) -> bool {
        let dt = (theta - self.center_theta) / self.r_theta;
        let dp = wrap_longitude(phi, self.center_phi) / self.r_phi;
        dt * dt + dp * dp < 1.0
    }
}

/// Localization region for pixel `(i, j)`: latitudinal radius `r_theta`,
/// longitudinal radius from [`longitudinal_radius`] at the pixel's latitude.
pub fn local_region(
    grid: &Grid,
    i: usize,
    j: usize,
    r_theta: f64,
    params: &LocalizationParams,
) -> Result<LocalRegion> {
    let (theta, phi) = grid.pixel_coords(i, j)?;
    LocalRegion::new(theta, phi, r_theta, longitudinal_radius(theta, params))
}

/// Rows that can intersect the region, with one row of slack; the exact
/// membership test filters the boundary.
pub(crate) fn candidate_rows(grid: &Grid, region: &LocalRegion) -> std::ops::Range<usize> {
    let dt = grid.d_theta();
    let lo = (region.center_theta - region.r_theta + PI / 2.0) / dt - 1.0;
    let hi = (region.center_theta + region.r_theta + PI / 2.0) / dt + 1.0;
    let lo = lo.floor().max(0.0) as usize;
    let hi = (hi.ceil() as usize).min(grid.n_lat);
    lo..hi
}

/// Candidate column offsets around the region center for row `i`, or `None`
/// when the row cannot intersect the region. Returns `(center_col, half_width)`
/// in column units, padded by one column; `half_width >= n_lon` means the
/// whole row is a candidate.
pub(crate) fn candidate_columns(
    grid: &Grid,
    region: &LocalRegion,
    i: usize,
) -> Option<(i64, i64)> {
    let dt = (grid.theta(i) - region.center_theta) / region.r_theta;
    let rem = 1.0 - dt * dt;
    if rem <= 0.0 {
        return None;
    }
    let half_phi = region.r_phi * rem.sqrt();
    let center = (region.center_phi / grid.d_phi()).round() as i64;
    let half = (half_phi / grid.d_phi()).ceil() as i64 + 1;
    Some((center, half))
}

/// All pixels strictly inside the region, sorted by `(row, column)`.
///
/// The ellipse never wraps in latitude; near the Poles it is truncated by
/// the grid edge.
pub fn region_members(grid: &Grid, region: &LocalRegion) -> Vec<(usize, usize)> {
    let n_lon = grid.n_lon as i64;
    let mut members = Vec::new();
    for i in candidate_rows(grid, region) {
        let theta = grid.theta(i);
        let Some((center, half)) = candidate_columns(grid, region, i) else {
            continue;
        };
        let mut row_members = Vec::new();
        if 2 * half + 1 >= n_lon {
            for j in 0..grid.n_lon {
                if region.contains(theta, grid.phi(j)) {
                    row_members.push((i, j));
                }
            }
        } else {
            for off in -half..=half {
                let j = (center + off).rem_euclid(n_lon) as usize;
                if region.contains(theta, grid.phi(j)) {
                    row_members.push((i, j));
                }
            }
            row_members.sort_unstable();
        }
        members.extend(row_members);
    }
    members
}
