//! Experiment drivers: ensemble initialization, the free-running simulator,
//! the twin-experiment harness, and the multi-method comparison runner.
//!
//! Every random draw is keyed by `(seed, member, step, pixel)`, so a run is
//! a deterministic function of its configuration: identical configs produce
//! byte-identical artifacts regardless of thread count, and checkpointed
//! runs resume bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assim::{assimilate, AssimConfig};
use crate::config::RunConfig;
use crate::ensemble::{ensemble_mean, Ensemble};
use crate::error::{Error, Result};
use crate::eval::{forecast_rmse, std_map, truth_rmse, write_rmse_csv, Region, RmseSeries};
use crate::grid::Grid;
use crate::map::SynopticMap;
use crate::mapio::{write_checkpoint, write_map};
use crate::obs::{synthesize_observations, ObservationSet};
use crate::rng::{RngCursor, StepStream, StreamDomain, TRUTH_MEMBER};
use crate::transport::{step, TransportParams};

/// Truncated Gaussian kernel with the given standard deviation in pixels.
fn gaussian_kernel(sigma_pix: f64) -> Vec<f64> {
    if sigma_pix <= 0.0 {
        return vec![1.0];
    }
    let half = (3.0 * sigma_pix).ceil() as i64;
    (-half..=half)
        .map(|m| (-0.5 * (m as f64 / sigma_pix).powi(2)).exp())
        .collect()
}

fn smooth_longitude(map: &SynopticMap, kernel: &[f64]) -> SynopticMap {
    let grid = map.grid();
    let n_lon = grid.n_lon() as i64;
    let half = (kernel.len() / 2) as i64;
    let total: f64 = kernel.iter().sum();
    let mut out = SynopticMap::zeros(grid);
    for i in 0..grid.n_lat() {
        for j in 0..grid.n_lon() {
            let mut acc = 0.0;
            for (tap, w) in kernel.iter().enumerate() {
                let jj = (j as i64 + tap as i64 - half).rem_euclid(n_lon) as usize;
                acc += w * map.get(i, jj);
            }
            out.set(i, j, acc / total);
        }
    }
    out
}

fn smooth_latitude(map: &SynopticMap, kernel: &[f64]) -> SynopticMap {
    let grid = map.grid();
    let n_lat = grid.n_lat() as i64;
    let half = (kernel.len() / 2) as i64;
    let mut out = SynopticMap::zeros(grid);
    for i in 0..grid.n_lat() {
        // Taps beyond the poles are dropped and the kernel renormalized.
        let mut used = 0.0;
        let lo = (i as i64 - half).max(0);
        let hi = (i as i64 + half).min(n_lat - 1);
        for ii in lo..=hi {
            used += kernel[(ii - i as i64 + half) as usize];
        }
        for j in 0..grid.n_lon() {
            let mut acc = 0.0;
            for ii in lo..=hi {
                acc += kernel[(ii - i as i64 + half) as usize] * map.get(ii as usize, j);
            }
            out.set(i, j, acc / used);
        }
    }
    out
}

/// Random initial map: white noise smoothed to the configured correlation
/// length and rescaled to the target area-weighted RMS amplitude.
pub fn initial_map(grid: Grid, seed: u64, member: u64, corr: f64, amp: f64) -> SynopticMap {
    let mut map = SynopticMap::zeros(grid);
    if amp == 0.0 {
        return map;
    }
    let stream = StepStream::new(seed, member, 0);
    let normal = StandardNormal;
    for (idx, v) in map.data_mut().iter_mut().enumerate() {
        let mut rng = stream.pixel(StreamDomain::Init, idx as u64);
        let n: f64 = normal.sample(&mut rng);
        *v = n;
    }
    if corr > 0.0 {
        let lon_kernel = gaussian_kernel(corr / grid.d_phi());
        let lat_kernel = gaussian_kernel(corr / grid.d_theta());
        map = smooth_longitude(&map, &lon_kernel);
        map = smooth_latitude(&map, &lat_kernel);
    }
    let rms = map.weighted_rms();
    if rms > 0.0 {
        map.scale(amp / rms);
    }
    map
}

/// Initial ensemble of `cfg.k` members, independent of the truth map.
pub fn initial_ensemble(cfg: &RunConfig) -> Result<Ensemble> {
    let grid = cfg.grid()?;
    let corr = cfg.init_corr_deg.to_radians();
    let members: Vec<SynopticMap> = (0..cfg.k as u64)
        .into_par_iter()
        .map(|m| initial_map(grid, cfg.seed, m, corr, cfg.init_amp))
        .collect();
    Ensemble::new(members)
}

/// Hidden truth map drawn from its own stream.
pub fn initial_truth(cfg: &RunConfig) -> Result<SynopticMap> {
    Ok(initial_map(
        cfg.grid()?,
        cfg.seed,
        TRUTH_MEMBER,
        cfg.init_corr_deg.to_radians(),
        cfg.init_amp,
    ))
}

/// Advance one map by `n_steps` transport steps starting at absolute step
/// index `start_step`.
pub fn advance_map(
    map: &SynopticMap,
    params: &TransportParams,
    seed: u64,
    member: u64,
    start_step: u64,
    n_steps: u64,
) -> SynopticMap {
    let mut current = map.clone();
    for s in 0..n_steps {
        current = step(&current, params, StepStream::new(seed, member, start_step + s));
    }
    current
}

/// Advance every member in parallel; member `i` uses stream id `i`.
pub fn advance_ensemble(
    e: &mut Ensemble,
    params: &TransportParams,
    seed: u64,
    start_step: u64,
    n_steps: u64,
) {
    e.members_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(m, map)| {
            *map = advance_map(map, params, seed, m as u64, start_step, n_steps);
        });
}

/// One assimilation branch of a twin experiment.
#[derive(Debug, Clone)]
pub struct Branch {
    pub label: String,
    pub assim: Option<AssimConfig>,
    pub ensemble: Ensemble,
}

/// Per-branch diagnostics for one epoch.
#[derive(Debug, Clone)]
pub struct BranchRecord {
    pub label: String,
    pub forecast_rmse: f64,
    pub truth_rmse_all: f64,
    pub truth_rmse_observed: f64,
    pub truth_rmse_unobserved: f64,
    pub std_median_observed: f64,
    pub std_median_unobserved: f64,
}

/// Diagnostics for one epoch across all branches.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch_seconds: f64,
    pub observations: ObservationSet,
    pub branches: Vec<BranchRecord>,
}

/// Twin experiment: a hidden truth trajectory observed through the rotating
/// Earth-side disk, assimilated by any number of method branches that share
/// the same member forcing and observation sequence.
pub struct TwinExperiment {
    cfg: RunConfig,
    grid: Grid,
    truth: SynopticMap,
    branches: Vec<Branch>,
    epoch_index: u64,
    step_index: u64,
}

impl TwinExperiment {
    pub fn new(cfg: &RunConfig, specs: &[(&str, Option<AssimConfig>)]) -> Result<Self> {
        cfg.validate()?;
        if specs.is_empty() {
            return Err(Error::usage("twin experiment needs at least one branch"));
        }
        let grid = cfg.grid()?;
        let base = initial_ensemble(cfg)?;
        let branches = specs
            .iter()
            .map(|(label, assim)| Branch {
                label: label.to_string(),
                assim: *assim,
                ensemble: base.clone(),
            })
            .collect();
        Ok(TwinExperiment {
            cfg: cfg.clone(),
            grid,
            truth: initial_truth(cfg)?,
            branches,
            epoch_index: 0,
            step_index: 0,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn truth(&self) -> &SynopticMap {
        &self.truth
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn epoch_index(&self) -> u64 {
        self.epoch_index
    }

    pub fn time_seconds(&self) -> f64 {
        self.epoch_index as f64 * self.cfg.obs_cadence_seconds
    }

    /// Advance truth and every branch to the next observation epoch.
    pub fn advance_physics(&mut self) -> Result<()> {
        let steps = self.cfg.steps_per_epoch() as u64;
        self.truth = advance_map(
            &self.truth,
            &self.cfg.transport,
            self.cfg.seed,
            TRUTH_MEMBER,
            self.step_index,
            steps,
        );
        for branch in &mut self.branches {
            advance_ensemble(
                &mut branch.ensemble,
                &self.cfg.transport,
                self.cfg.seed,
                self.step_index,
                steps,
            );
        }
        self.step_index += steps;
        self.epoch_index += 1;
        Ok(())
    }

    /// Synthetic observations of the truth at the current epoch.
    pub fn observe(&self) -> Result<ObservationSet> {
        let time = self.time_seconds();
        let geom = self.cfg.observer_geometry(time);
        let stream = StepStream::new(self.cfg.seed, 0, self.epoch_index);
        let set = synthesize_observations(&self.truth, &geom, &self.cfg.noise, stream)?;
        Ok(set.with_epoch(time))
    }

    /// Run the branch's analysis kernel, if it has one.
    pub fn assimilate_branch(&mut self, idx: usize, obs: &ObservationSet) -> Result<()> {
        let branch = &mut self.branches[idx];
        if let Some(assim) = &branch.assim {
            branch.ensemble = assimilate(&branch.ensemble, obs, assim)?;
        }
        Ok(())
    }

    /// Advance, observe, score, assimilate, and score again.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        self.advance_physics()?;
        let obs = self.observe()?;
        if obs.is_empty() {
            return Err(Error::usage(
                "observation geometry yields no visible pixels; cannot score the epoch",
            ));
        }
        let mut records = Vec::with_capacity(self.branches.len());
        for idx in 0..self.branches.len() {
            let fc_rmse = forecast_rmse(&ensemble_mean(&self.branches[idx].ensemble), &obs)?;
            self.assimilate_branch(idx, &obs)?;
            let branch = &self.branches[idx];
            let mean = ensemble_mean(&branch.ensemble);
            let std = std_map(&branch.ensemble);
            let (med_obs, med_unobs) = median_std(&std, &obs);
            records.push(BranchRecord {
                label: branch.label.clone(),
                forecast_rmse: fc_rmse,
                truth_rmse_all: truth_rmse(&mean, &self.truth, Region::All)?,
                truth_rmse_observed: truth_rmse(&mean, &self.truth, Region::Observed(&obs))?,
                truth_rmse_unobserved: truth_rmse(&mean, &self.truth, Region::Unobserved(&obs))?,
                std_median_observed: med_obs,
                std_median_unobserved: med_unobs,
            });
        }
        Ok(EpochRecord {
            epoch_seconds: self.time_seconds(),
            observations: obs,
            branches: records,
        })
    }
}

/// Median of the spread map over observed and unobserved pixels.
pub fn median_std(std: &SynopticMap, obs: &ObservationSet) -> (f64, f64) {
    let grid = std.grid();
    let mut observed = vec![false; grid.n_pixels()];
    for rec in obs.records() {
        observed[grid.index(rec.row, rec.col)] = true;
    }
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (idx, &v) in std.data().iter().enumerate() {
        if observed[idx] {
            inside.push(v);
        } else {
            outside.push(v);
        }
    }
    (median(inside), median(outside))
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite spreads"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn should_write_maps(cfg: &RunConfig, epoch: usize, n_epochs: usize) -> bool {
    if epoch == n_epochs {
        return true;
    }
    cfg.map_output_every_epochs > 0 && epoch.is_multiple_of(cfg.map_output_every_epochs)
}

/// Free-running ensemble simulation; writes mean/std maps and a final
/// checkpoint under `out`.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    write_text(&out.join("resolved-config.txt"), &cfg.resolved_text())?;

    let mut ensemble = initial_ensemble(cfg)?;
    write_map(&ensemble_mean(&ensemble), 0.0, &out.join("mean_epoch0000.txt"))?;
    write_map(&std_map(&ensemble), 0.0, &out.join("std_epoch0000.txt"))?;

    let n_epochs = cfg.n_epochs();
    let steps_per_epoch = cfg.steps_per_epoch() as u64;
    let mut step_index = 0u64;
    for epoch in 1..=n_epochs {
        advance_ensemble(&mut ensemble, &cfg.transport, cfg.seed, step_index, steps_per_epoch);
        step_index += steps_per_epoch;
        if should_write_maps(cfg, epoch, n_epochs) {
            let time = epoch as f64 * cfg.obs_cadence_seconds;
            write_map(
                &ensemble_mean(&ensemble),
                time,
                &out.join(format!("mean_epoch{epoch:04}.txt")),
            )?;
            write_map(
                &std_map(&ensemble),
                time,
                &out.join(format!("std_epoch{epoch:04}.txt")),
            )?;
        }
    }
    write_checkpoint(
        &ensemble,
        n_epochs as f64 * cfg.obs_cadence_seconds,
        RngCursor {
            seed: cfg.seed,
            step: step_index,
        },
        &out.join("checkpoint"),
    )?;
    Ok(())
}

fn run_branches(cfg: &RunConfig, specs: &[(&str, Option<AssimConfig>)], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_text(&out.join("resolved-config.txt"), &cfg.resolved_text())?;

    let mut experiment = TwinExperiment::new(cfg, specs)?;
    write_map(
        &ensemble_mean(&experiment.branches[0].ensemble),
        0.0,
        &out.join("initial_mean.txt"),
    )?;
    write_map(
        &std_map(&experiment.branches[0].ensemble),
        0.0,
        &out.join("initial_std.txt"),
    )?;
    write_map(&experiment.truth, 0.0, &out.join("truth_epoch0000.txt"))?;

    let mut rmse_series: Vec<RmseSeries> =
        specs.iter().map(|(label, _)| RmseSeries::new(*label)).collect();
    let mut truth_csv = String::from("epoch_seconds,region,rmse_gauss,method\n");
    let mut std_csv =
        String::from("epoch_seconds,median_std_observed_gauss,median_std_unobserved_gauss,method\n");

    let n_epochs = cfg.n_epochs();
    for epoch in 1..=n_epochs {
        let record = experiment.run_epoch()?;
        for (series, branch) in rmse_series.iter_mut().zip(&record.branches) {
            series.push(record.epoch_seconds, branch.forecast_rmse)?;
            for (region, value) in [
                ("all", branch.truth_rmse_all),
                ("observed", branch.truth_rmse_observed),
                ("unobserved", branch.truth_rmse_unobserved),
            ] {
                writeln!(
                    truth_csv,
                    "{},{},{:.16e},{}",
                    record.epoch_seconds, region, value, branch.label
                )
                .expect("writing to string");
            }
            writeln!(
                std_csv,
                "{},{:.16e},{:.16e},{}",
                record.epoch_seconds,
                branch.std_median_observed,
                branch.std_median_unobserved,
                branch.label
            )
            .expect("writing to string");
        }
        if should_write_maps(cfg, epoch, n_epochs) {
            let time = record.epoch_seconds;
            write_map(
                &experiment.truth,
                time,
                &out.join(format!("truth_epoch{epoch:04}.txt")),
            )?;
            for branch in &experiment.branches {
                let mean = ensemble_mean(&branch.ensemble);
                let mut error = mean.clone();
                for (e, t) in error.data_mut().iter_mut().zip(experiment.truth.data()) {
                    *e -= t;
                }
                write_map(
                    &mean,
                    time,
                    &out.join(format!("{}_mean_epoch{epoch:04}.txt", branch.label)),
                )?;
                write_map(
                    &std_map(&branch.ensemble),
                    time,
                    &out.join(format!("{}_std_epoch{epoch:04}.txt", branch.label)),
                )?;
                write_map(
                    &error,
                    time,
                    &out.join(format!("{}_error_epoch{epoch:04}.txt", branch.label)),
                )?;
            }
        }
    }

    let mut rmse_file = Vec::new();
    write_rmse_csv(&mut rmse_file, &rmse_series)?;
    fs::write(out.join("rmse.csv"), rmse_file)?;
    write_text(&out.join("truth_rmse.csv"), &truth_csv)?;
    write_text(&out.join("std_summary.csv"), &std_csv)?;
    Ok(())
}

/// Twin experiment with the configured method (or the no-assimilation
/// baseline when none is configured).
pub fn run_osse(cfg: &RunConfig, out: &Path) -> Result<()> {
    let label = cfg.method.map_or("none".to_string(), |m| m.to_string());
    run_branches(cfg, &[(label.as_str(), cfg.assim_config())], out)
}

/// Twin experiment running the no-assimilation baseline and all three
/// methods against one shared truth and observation sequence.
pub fn run_compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    use crate::assim::Method;
    run_branches(
        cfg,
        &[
            ("none", None),
            ("enls", Some(cfg.assim_config_for(Method::Enls))),
            ("etkf", Some(cfg.assim_config_for(Method::Etkf))),
            ("letkf", Some(cfg.assim_config_for(Method::Letkf))),
        ],
        out,
    )
}
