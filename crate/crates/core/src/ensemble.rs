//! Ensemble state: per-pixel statistics, anomaly matrices, and
//! multiplicative inflation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::map::SynopticMap;
use crate::obs::ObservationSet;

/// Ordered collection of member maps sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    grid: Grid,
    members: Vec<SynopticMap>,
}

impl Ensemble {
    /// At least two members are required; anomaly normalization divides by
    /// `k - 1`.
    pub fn new(members: Vec<SynopticMap>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::usage(format!(
                "ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let grid = members[0].grid();
        if members.iter().any(|m| m.grid() != grid) {
            return Err(Error::usage("ensemble members must share one grid"));
        }
        Ok(Ensemble { grid, members })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[SynopticMap] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [SynopticMap] {
        &mut self.members
    }

    pub fn member(&self, i: usize) -> &SynopticMap {
        &self.members[i]
    }
}

/// Pixel-wise arithmetic mean of the members.
pub fn ensemble_mean(e: &Ensemble) -> SynopticMap {
    let k = e.k() as f64;
    let mut mean = SynopticMap::zeros(e.grid());
    for member in e.members() {
        for (m, v) in mean.data_mut().iter_mut().zip(member.data()) {
            *m += v;
        }
    }
    for m in mean.data_mut() {
        *m /= k;
    }
    mean
}

/// Pixel-wise sample standard deviation with divisor `k - 1`.
pub fn ensemble_std(e: &Ensemble) -> SynopticMap {
    let k = e.k();
    let mean = ensemble_mean(e);
    let mut out = SynopticMap::zeros(e.grid());
    for member in e.members() {
        for ((s, v), m) in out.data_mut().iter_mut().zip(member.data()).zip(mean.data()) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in out.data_mut() {
        *s = (*s / (k as f64 - 1.0)).sqrt();
    }
    out
}

/// Member deviations from the ensemble mean over a subset of flat pixel
/// indices. Column `i` holds member `i`'s anomalies; rows sum to zero.
pub fn anomaly_matrix(e: &Ensemble, pixels: &[usize]) -> Result<DMatrix<f64>> {
    let n_pixels = e.grid().n_pixels();
    if let Some(&bad) = pixels.iter().find(|&&p| p >= n_pixels) {
        return Err(Error::usage(format!(
            "pixel index {bad} out of range for {n_pixels}-pixel grid"
        )));
    }
    let mean = ensemble_mean(e);
    let mut out = DMatrix::zeros(pixels.len(), e.k());
    for (col, member) in e.members().iter().enumerate() {
        for (row, &p) in pixels.iter().enumerate() {
            out[(row, col)] = member.data()[p] - mean.data()[p];
        }
    }
    Ok(out)
}

/// Scale member deviations about the mean by `rho`. `rho = 1` returns the
/// ensemble unchanged, bit for bit.
pub fn inflate(e: &Ensemble, rho: f64) -> Result<Ensemble> {
    if !(rho > 0.0) {
        return Err(Error::usage(format!("inflation factor must be > 0, got {rho}")));
    }
    if rho == 1.0 {
        return Ok(e.clone());
    }
    let mean = ensemble_mean(e);
    let mut members = e.members().to_vec();
    for member in &mut members {
        for (v, m) in member.data_mut().iter_mut().zip(mean.data()) {
            *v = m + rho * (*v - m);
        }
    }
    Ensemble::new(members)
}

/// Ensemble of simulated observations: member values at the observed
/// pixels, one column per member.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationEnsemble {
    values: DMatrix<f64>,
    mean: DVector<f64>,
}

impl ObservationEnsemble {
    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Deviations of each column from the row mean.
    pub fn anomalies(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.mean;
        }
        out
    }
}

/// Apply the observation operator (pixel selection) to every member.
pub fn simulate_observations(e: &Ensemble, obs: &ObservationSet) -> Result<ObservationEnsemble> {
    if obs.grid() != e.grid() {
        return Err(Error::usage("observation grid does not match ensemble grid"));
    }
    let grid = e.grid();
    let n = obs.len();
    let k = e.k();
    let mut values = DMatrix::zeros(n, k);
    for (col, member) in e.members().iter().enumerate() {
        for (row, rec) in obs.records().iter().enumerate() {
            values[(row, col)] = member.data()[grid.index(rec.row, rec.col)];
        }
    }
    let mut mean = DVector::zeros(n);
    for row in 0..n {
        mean[row] = values.row(row).sum() / k as f64;
    }
    Ok(ObservationEnsemble { values, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::ObsRecord;
    use crate::rng::{StepStream, StreamDomain};

    fn random_ensemble(grid: Grid, k: usize, seed: u64) -> Ensemble {
        let members = (0..k)
            .map(|m| {
                let mut map = SynopticMap::zeros(grid);
                let stream = StepStream::new(seed, m as u64, 0);
                for idx in 0..grid.n_pixels() {
                    let mut rng = stream.pixel(StreamDomain::Init, idx as u64);
                    map.data_mut()[idx] = 10.0 * (rng.uniform() - 0.5);
                }
                map
            })
            .collect();
        Ensemble::new(members).unwrap()
    }

    #[test]
    fn rejects_small_or_mismatched_ensembles() {
        let g = Grid::new(2, 4).unwrap();
        assert!(Ensemble::new(vec![SynopticMap::zeros(g)]).is_err());
        let g2 = Grid::new(2, 5).unwrap();
        assert!(Ensemble::new(vec![SynopticMap::zeros(g), SynopticMap::zeros(g2)]).is_err());
    }

    #[test]
    fn mean_of_identical_members() {
        let g = Grid::new(2, 4).unwrap();
        let m = SynopticMap::from_data(g, (0..8).map(|x| x as f64).collect()).unwrap();
        let e = Ensemble::new(vec![m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(ensemble_mean(&e).data(), m.data());
        assert!(ensemble_std(&e).data().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mean_and_std_two_members() {
        let g = Grid::new(1, 1).unwrap();
        let e = Ensemble::new(vec![
            SynopticMap::from_data(g, vec![1.0]).unwrap(),
            SynopticMap::from_data(g, vec![3.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(ensemble_mean(&e).data()[0], 2.0);
        // Sample std with divisor 1: sqrt(2).
        assert!((ensemble_std(&e).data()[0] - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn anomaly_rows_sum_to_zero() {
        let g = Grid::new(4, 8).unwrap();
        let e = random_ensemble(g, 7, 3);
        let pixels: Vec<usize> = (0..g.n_pixels()).collect();
        let x = anomaly_matrix(&e, &pixels).unwrap();
        for row in 0..x.nrows() {
            let sum: f64 = x.row(row).sum();
            let norm: f64 = x.row(row).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(sum.abs() <= 1e-12 * norm.max(1e-30));
        }
        // k = 2 case: values {1, 3} -> row (-1, +1).
        let g1 = Grid::new(1, 1).unwrap();
        let e2 = Ensemble::new(vec![
            SynopticMap::from_data(g1, vec![1.0]).unwrap(),
            SynopticMap::from_data(g1, vec![3.0]).unwrap(),
        ])
        .unwrap();
        let x2 = anomaly_matrix(&e2, &[0]).unwrap();
        assert_eq!(x2[(0, 0)], -1.0);
        assert_eq!(x2[(0, 1)], 1.0);
    }

    #[test]
    fn anomaly_matrix_checks_subset() {
        let g = Grid::new(2, 4).unwrap();
        let e = random_ensemble(g, 3, 1);
        assert!(anomaly_matrix(&e, &[8]).is_err());
    }

    #[test]
    fn inflation_contract() {
        let g = Grid::new(4, 8).unwrap();
        let e = random_ensemble(g, 6, 9);
        let rho = 1.7;
        let inflated = inflate(&e, rho).unwrap();

        // Mean preserved.
        let m0 = ensemble_mean(&e);
        let m1 = ensemble_mean(&inflated);
        for (a, b) in m0.data().iter().zip(m1.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        // Std scales by rho.
        let s0 = ensemble_std(&e);
        let s1 = ensemble_std(&inflated);
        for (a, b) in s0.data().iter().zip(s1.data()) {
            assert!((rho * a - b).abs() <= 1e-12 * b.abs().max(1e-30));
        }
        // rho = 1 is bit-identical.
        let same = inflate(&e, 1.0).unwrap();
        for (ma, mb) in e.members().iter().zip(same.members()) {
            for (a, b) in ma.data().iter().zip(mb.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // k = 2, values {1, 3}, rho = 2 -> {0, 4}.
        let g1 = Grid::new(1, 1).unwrap();
        let e2 = Ensemble::new(vec![
            SynopticMap::from_data(g1, vec![1.0]).unwrap(),
            SynopticMap::from_data(g1, vec![3.0]).unwrap(),
        ])
        .unwrap();
        let e2i = inflate(&e2, 2.0).unwrap();
        assert_eq!(e2i.member(0).data()[0], 0.0);
        assert_eq!(e2i.member(1).data()[0], 4.0);
    }

    #[test]
    fn inflate_rejects_nonpositive_rho() {
        let g = Grid::new(2, 4).unwrap();
        let e = random_ensemble(g, 3, 2);
        assert!(inflate(&e, 0.0).is_err());
        assert!(inflate(&e, -1.0).is_err());
    }

    #[test]
    fn std_invariant_under_member_permutation() {
        let g = Grid::new(3, 6).unwrap();
        let e = random_ensemble(g, 5, 4);
        let mut members = e.members().to_vec();
        members.rotate_left(2);
        members.swap(0, 3);
        let p = Ensemble::new(members).unwrap();
        let s0 = ensemble_std(&e);
        let s1 = ensemble_std(&p);
        for (a, b) in s0.data().iter().zip(s1.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-30));
        }
    }

    #[test]
    fn simulate_observations_selects_pixels() {
        let g = Grid::new(2, 4).unwrap();
        let e = random_ensemble(g, 4, 11);
        let obs = ObservationSet::new(
            g,
            0.0,
            vec![
                ObsRecord { row: 1, col: 2, value: 0.0, sigma: 1.0 },
                ObsRecord { row: 0, col: 0, value: 0.0, sigma: 1.0 },
            ],
        )
        .unwrap();
        let oe = simulate_observations(&e, &obs).unwrap();
        assert_eq!(oe.n_obs(), 2);
        assert_eq!(oe.k(), 4);
        for col in 0..4 {
            assert_eq!(oe.values()[(0, col)], e.member(col).get(1, 2));
            assert_eq!(oe.values()[(1, col)], e.member(col).get(0, 0));
        }
        // Anomaly rows sum to zero.
        let y = oe.anomalies();
        for row in 0..y.nrows() {
            assert!(y.row(row).sum().abs() < 1e-12);
        }
        // Empty observation set.
        let empty = ObservationSet::new(g, 0.0, vec![]).unwrap();
        let oe = simulate_observations(&e, &empty).unwrap();
        assert_eq!(oe.n_obs(), 0);
    }
}
