//! Full-surface map of signed radial magnetic flux density.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Row-major grid of signed flux density in gauss; row 0 is the
/// southernmost latitude row.
#[derive(Debug, Clone, PartialEq)]
pub struct SynopticMap {
    grid: Grid,
    data: Vec<f64>,
}

impl SynopticMap {
    /// Zero-valued map on `grid`.
    pub fn zeros(grid: Grid) -> Self {
        SynopticMap {
            grid,
            data: vec![0.0; grid.n_pixels()],
        }
    }

    pub fn from_data(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_pixels() {
            return Err(Error::usage(format!(
                "map data length {} does not match {}x{} grid",
                data.len(),
                grid.n_lat(),
                grid.n_lon()
            )));
        }
        Ok(SynopticMap { grid, data })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.grid.index(i, j);
        self.data[idx] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Area-weighted root-mean-square value, gauss.
    pub fn weighted_rms(&self) -> f64 {
        let grid = self.grid;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..grid.n_lat() {
            let w = grid.area_weight(i);
            for j in 0..grid.n_lon() {
                let b = self.get(i, j);
                num += w * b * b;
                den += w;
            }
        }
        (num / den).sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}
