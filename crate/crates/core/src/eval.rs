//! Scoring and diagnostics: forecast RMSE over the observed region,
//! ensemble spread maps, truth-error metrics for twin experiments, and
//! flux-balance summaries.

use std::collections::HashSet;
use std::io::Write;

use crate::ensemble::{ensemble_std, Ensemble};
use crate::error::{Error, Result};
use crate::map::SynopticMap;
use crate::obs::ObservationSet;

/// Root-mean-square difference between the forecast mean and the observed
/// values, unweighted over the observation records.
pub fn forecast_rmse(forecast_mean: &SynopticMap, obs: &ObservationSet) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::usage("forecast_rmse needs a nonempty observation set"));
    }
    if obs.grid() != forecast_mean.grid() {
        return Err(Error::usage("observation grid does not match map grid"));
    }
    let mut sum = 0.0;
    for rec in obs.records() {
        let d = forecast_mean.get(rec.row, rec.col) - rec.value;
        sum += d * d;
    }
    Ok((sum / obs.len() as f64).sqrt())
}

/// Pixel-wise sample standard deviation of the ensemble, as a map artifact.
pub fn std_map(e: &Ensemble) -> SynopticMap {
    ensemble_std(e)
}

/// Pixel selection for [`truth_rmse`].
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    All,
    Observed(&'a ObservationSet),
    Unobserved(&'a ObservationSet),
}

/// Area-weighted RMSE of `analysis_mean - truth` over the selected region.
pub fn truth_rmse(analysis_mean: &SynopticMap, truth: &SynopticMap, region: Region) -> Result<f64> {
    let grid = analysis_mean.grid();
    if truth.grid() != grid {
        return Err(Error::usage("maps must share one grid"));
    }
    let observed: Option<HashSet<usize>> = match region {
        Region::All => None,
        Region::Observed(obs) | Region::Unobserved(obs) => {
            if obs.grid() != grid {
                return Err(Error::usage("observation grid does not match map grid"));
            }
            Some(
                obs.records()
                    .iter()
                    .map(|r| grid.index(r.row, r.col))
                    .collect(),
            )
        }
    };
    let keep = |idx: usize| match (&region, &observed) {
        (Region::All, _) => true,
        (Region::Observed(_), Some(set)) => set.contains(&idx),
        (Region::Unobserved(_), Some(set)) => !set.contains(&idx),
        _ => unreachable!(),
    };

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.n_lat() {
        let w = grid.area_weight(i);
        for j in 0..grid.n_lon() {
            let idx = grid.index(i, j);
            if !keep(idx) {
                continue;
            }
            let d = analysis_mean.data()[idx] - truth.data()[idx];
            num += w * d * d;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::usage("selected region is empty"));
    }
    Ok((num / den).sqrt())
}

/// Area-weighted `(signed, unsigned)` totals of the map, gauss steradian.
pub fn flux_balance(map: &SynopticMap) -> (f64, f64) {
    let grid = map.grid();
    let mut signed = 0.0;
    let mut unsigned = 0.0;
    for i in 0..grid.n_lat() {
        let w = grid.area_weight(i);
        for j in 0..grid.n_lon() {
            let b = map.get(i, j);
            signed += w * b;
            unsigned += w * b.abs();
        }
    }
    (signed, unsigned)
}

/// RMSE time series for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    method: String,
    epochs: Vec<f64>,
    values: Vec<f64>,
}

impl RmseSeries {
    pub fn new(method: impl Into<String>) -> Self {
        RmseSeries {
            method: method.into(),
            epochs: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, epoch_seconds: f64, rmse: f64) -> Result<()> {
        if !(rmse >= 0.0) {
            return Err(Error::usage(format!("RMSE must be >= 0, got {rmse}")));
        }
        if let Some(&last) = self.epochs.last() {
            if epoch_seconds <= last {
                return Err(Error::usage("epochs must be strictly increasing"));
            }
        }
        self.epochs.push(epoch_seconds);
        self.values.push(rmse);
        Ok(())
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Write one or more series as CSV with header
/// `epoch_seconds,rmse_gauss,method`.
pub fn write_rmse_csv<W: Write>(out: &mut W, series: &[RmseSeries]) -> Result<()> {
    writeln!(out, "epoch_seconds,rmse_gauss,method")?;
    for s in series {
        for (epoch, value) in s.epochs.iter().zip(&s.values) {
            writeln!(out, "{},{:.16e},{}", epoch, value, s.method)?;
        }
    }
    Ok(())
}
