//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its runtime (visible with `--nocapture`). Tolerances and
//! budgets are pinned in the assertions.

use std::collections::HashSet;
use std::fs;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use sunflux_core::assim::{
    enls_assimilate, etkf_assimilate, letkf_assimilate, AssimConfig, Method,
};
use sunflux_core::config::RunConfig;
use sunflux_core::ensemble::{ensemble_mean, ensemble_std, inflate, Ensemble};
use sunflux_core::eval::flux_balance;
use sunflux_core::grid::{local_region, Grid, LocalizationParams};
use sunflux_core::map::SynopticMap;
use sunflux_core::obs::{ObsRecord, ObservationSet};
use sunflux_core::rng::{CounterRng, StepStream, StreamDomain};
use sunflux_core::runner::{run_compare, TwinExperiment};
use sunflux_core::transport::{
    advect_rotation, random_emergence, supergranular_step, TransportParams,
};

fn stream_rng(seed: u64, tag: u64) -> CounterRng {
    StepStream::new(seed, tag, 0).pixel(StreamDomain::Init, 0)
}

fn normal(rng: &mut CounterRng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_ensemble(grid: Grid, k: usize, seed: u64, amp: f64) -> Ensemble {
    let members = (0..k)
        .map(|m| {
            let mut map = SynopticMap::zeros(grid);
            let stream = StepStream::new(seed, m as u64, 0);
            for idx in 0..grid.n_pixels() {
                let mut rng = stream.pixel(StreamDomain::Init, idx as u64);
                map.data_mut()[idx] = amp * normal(&mut rng);
            }
            map
        })
        .collect();
    Ensemble::new(members).unwrap()
}

fn report(criterion: u32, name: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "criterion {criterion} exceeded its {budget:?} budget: {elapsed:?}"
    );
    println!("criterion {criterion:02} ({name}): PASS in {elapsed:.2?}");
}

/// Criterion 1: single-pixel ETKF and LETKF analysis means match the scalar
/// Kalman formula to 1e-10 relative; 200 random instances; < 1 s.
#[test]
fn criterion_01_scalar_kalman_oracle() {
    let started = Instant::now();
    let grid = Grid::new(1, 1).unwrap();
    let mut rng = stream_rng(101, 0);
    let mut instances = 0;
    for (ki, &k) in [2usize, 8, 16].iter().enumerate() {
        let runs = if ki < 2 { 67 } else { 66 };
        for run in 0..runs {
            let values: Vec<f64> = (0..k).map(|_| 2.0 + 5.0 * normal(&mut rng)).collect();
            let y = 2.0 + 5.0 * normal(&mut rng);
            let sigma = 0.1 + 1.9 * rng.uniform();

            let mean = values.iter().sum::<f64>() / k as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
            let oracle = mean + var / (var + sigma * sigma) * (y - mean);

            let members = values
                .iter()
                .map(|&v| SynopticMap::from_data(grid, vec![v]).unwrap())
                .collect();
            let e = Ensemble::new(members).unwrap();
            let obs = ObservationSet::new(
                grid,
                0.0,
                vec![ObsRecord { row: 0, col: 0, value: y, sigma }],
            )
            .unwrap();
            let mut cfg = AssimConfig::new(Method::Etkf);
            cfg.rho = 1.0;

            let etkf = etkf_assimilate(&e, &obs, &cfg).unwrap();
            let etkf_mean = ensemble_mean(&etkf).data()[0];
            cfg.method = Method::Letkf;
            let letkf = letkf_assimilate(&e, &obs, &cfg).unwrap();
            let letkf_mean = ensemble_mean(&letkf).data()[0];

            let scale = oracle.abs().max(1.0);
            assert!(
                (etkf_mean - oracle).abs() / scale < 1e-10,
                "k={k} run={run}: etkf {etkf_mean} vs oracle {oracle}"
            );
            assert!(
                (letkf_mean - oracle).abs() / scale < 1e-10,
                "k={k} run={run}: letkf {letkf_mean} vs oracle {oracle}"
            );
            instances += 1;
        }
    }
    assert_eq!(instances, 200);
    report(1, "scalar Kalman oracle", started, Duration::from_secs(1));
}

/// Criterion 2: with localization radii covering the whole sphere, LETKF
/// equals ETKF to 1e-8 relative on every member; 50 instances; < 10 s.
#[test]
fn criterion_02_global_limit_equivalence() {
    let started = Instant::now();
    let grid = Grid::new(8, 16).unwrap();
    let mut rng = stream_rng(202, 0);

    // 5 rad radii: every pixel's ellipse contains the entire sphere since
    // (pi/5)^2 + (pi/5)^2 < 1.
    let loc = LocalizationParams {
        base: 5.0,
        growth: 0.0,
        theta_max: 85.0_f64.to_radians(),
    };
    let cfg_letkf = AssimConfig {
        method: Method::Letkf,
        rho: 1.5,
        r_theta: 5.0,
        loc,
        inflate_unobserved: false,
    };
    let cfg_etkf = AssimConfig {
        method: Method::Etkf,
        ..cfg_letkf
    };

    // Sanity: the region around the worst-case corner pixel holds every
    // pixel of the grid.
    let region = local_region(&grid, 0, 0, cfg_letkf.r_theta, &cfg_letkf.loc).unwrap();
    for i in 0..grid.n_lat() {
        for j in 0..grid.n_lon() {
            assert!(region.contains(grid.theta(i), grid.phi(j)));
        }
    }

    for instance in 0..50u64 {
        let e = random_ensemble(grid, 8, 2000 + instance, 4.0);
        let mut records = Vec::new();
        for p in 0..grid.n_pixels() {
            if rng.uniform() < 0.4 {
                records.push(ObsRecord {
                    row: p / grid.n_lon(),
                    col: p % grid.n_lon(),
                    value: 4.0 * normal(&mut rng),
                    sigma: 0.3 + 0.7 * rng.uniform(),
                });
            }
        }
        if records.is_empty() {
            continue;
        }
        let obs = ObservationSet::new(grid, 0.0, records).unwrap();

        let a = letkf_assimilate(&e, &obs, &cfg_letkf).unwrap();
        let b = etkf_assimilate(&e, &obs, &cfg_etkf).unwrap();
        for (member, (ma, mb)) in a.members().iter().zip(b.members()).enumerate() {
            for (idx, (x, y)) in ma.data().iter().zip(mb.data()).enumerate() {
                assert!(
                    (x - y).abs() <= 1e-8 * y.abs().max(1.0),
                    "instance {instance} member {member} pixel {idx}: {x} vs {y}"
                );
            }
        }
    }
    report(2, "global-limit equivalence", started, Duration::from_secs(10));
}

/// Criterion 3: ETKF analysis mean and covariance match a direct
/// state-space Kalman update with the ensemble-sampled forecast covariance,
/// on domains of at most 8 pixels with k >= 9; 1e-8 relative; < 10 s.
#[test]
fn criterion_03_brute_force_kalman_equivalence() {
    let started = Instant::now();
    let mut rng = stream_rng(303, 0);
    for (gi, (n_lat, n_lon)) in [(1usize, 4usize), (2, 4)].iter().enumerate() {
        let grid = Grid::new(*n_lat, *n_lon).unwrap();
        let n = grid.n_pixels();
        for (ki, &k) in [9usize, 12].iter().enumerate() {
            for instance in 0..15u64 {
                let seed = 3000 + 100 * gi as u64 + 10 * ki as u64 + instance;
                let e = random_ensemble(grid, k, seed, 3.0);

                // Observe a varying subset of pixels.
                let mut records = Vec::new();
                for p in 0..n {
                    if rng.uniform() < 0.6 {
                        records.push(ObsRecord {
                            row: p / n_lon,
                            col: p % n_lon,
                            value: 3.0 * normal(&mut rng),
                            sigma: 0.5 + rng.uniform(),
                        });
                    }
                }
                if records.is_empty() {
                    continue;
                }
                let obs = ObservationSet::new(grid, 0.0, records).unwrap();

                // Direct Kalman oracle in state space.
                let mean_map = ensemble_mean(&e);
                let x_mean = DVector::from_column_slice(mean_map.data());
                let mut x_anom = DMatrix::zeros(n, k);
                for (col, member) in e.members().iter().enumerate() {
                    for row in 0..n {
                        x_anom[(row, col)] = member.data()[row] - x_mean[row];
                    }
                }
                let p_f = &x_anom * x_anom.transpose() / (k as f64 - 1.0);
                let n_obs = obs.len();
                let mut h = DMatrix::zeros(n_obs, n);
                let mut r = DMatrix::zeros(n_obs, n_obs);
                let mut y = DVector::zeros(n_obs);
                for (row, rec) in obs.records().iter().enumerate() {
                    h[(row, grid.index(rec.row, rec.col))] = 1.0;
                    r[(row, row)] = rec.sigma * rec.sigma;
                    y[row] = rec.value;
                }
                let s = &h * &p_f * h.transpose() + &r;
                let gain = &p_f * h.transpose() * s.try_inverse().expect("S is SPD");
                let mean_oracle = &x_mean + &gain * (&y - &h * &x_mean);
                let cov_oracle = (DMatrix::identity(n, n) - &gain * &h) * &p_f;

                // ETKF without inflation.
                let mut cfg = AssimConfig::new(Method::Etkf);
                cfg.rho = 1.0;
                let analyzed = etkf_assimilate(&e, &obs, &cfg).unwrap();
                let a_mean_map = ensemble_mean(&analyzed);
                let a_mean = DVector::from_column_slice(a_mean_map.data());
                let mut a_anom = DMatrix::zeros(n, k);
                for (col, member) in analyzed.members().iter().enumerate() {
                    for row in 0..n {
                        a_anom[(row, col)] = member.data()[row] - a_mean[row];
                    }
                }
                let a_cov = &a_anom * a_anom.transpose() / (k as f64 - 1.0);

                let mean_err = (&a_mean - &mean_oracle).norm() / mean_oracle.norm().max(1.0);
                assert!(mean_err < 1e-8, "seed {seed}: mean error {mean_err}");
                let cov_err = (&a_cov - &cov_oracle).norm() / cov_oracle.norm().max(1e-12);
                assert!(cov_err < 1e-8, "seed {seed}: covariance error {cov_err}");
            }
        }
    }
    report(3, "brute-force Kalman equivalence", started, Duration::from_secs(10));
}

/// Criterion 4: in the full-scale twin experiment, ETKF collapses the
/// unobserved-pixel analysis spread below 50% of its initial value within
/// 20 epochs, while LETKF with inflate_unobserved = false leaves
/// unobserved-pixel member values bit-unchanged at every analysis; < 10 min.
#[test]
fn criterion_04_ensemble_collapse_reproduction() {
    let started = Instant::now();
    let cfg = RunConfig::default(); // 180x360, k = 16, 60 days, rho = 1.5
    assert_eq!((cfg.n_lat, cfg.n_lon, cfg.k), (180, 360, 16));
    assert_eq!(cfg.rho, 1.5);
    assert!(!cfg.inflate_unobserved);

    let mut exp = TwinExperiment::new(
        &cfg,
        &[
            ("etkf", Some(cfg.assim_config_for(Method::Etkf))),
            ("letkf", Some(cfg.assim_config_for(Method::Letkf))),
        ],
    )
    .unwrap();
    let grid = exp.grid();
    let initial_std = ensemble_std(&exp.branches()[0].ensemble);
    let r_theta = cfg.r_theta_deg.to_radians();
    let loc = cfg.localization();

    let mut etkf_median_unobs = f64::NAN;
    let mut initial_median_unobs = f64::NAN;
    let mut letkf_updated_pixels = 0usize;

    for epoch in 1..=20u64 {
        exp.advance_physics().unwrap();
        let obs = exp.observe().unwrap();
        exp.assimilate_branch(0, &obs).unwrap();

        // LETKF: snapshot the forecast, analyze, then check that pixels
        // whose localization ellipse holds no observation kept their bits.
        let forecast: Vec<Vec<f64>> = exp.branches()[1]
            .ensemble
            .members()
            .iter()
            .map(|m| m.data().to_vec())
            .collect();
        exp.assimilate_branch(1, &obs).unwrap();

        let mut obs_by_row: Vec<Vec<usize>> = vec![Vec::new(); grid.n_lat()];
        for rec in obs.records() {
            obs_by_row[rec.row].push(grid.index(rec.row, rec.col));
        }
        let analysis = &exp.branches()[1].ensemble;
        for i in (0..grid.n_lat()).step_by(2) {
            for j in 0..grid.n_lon() {
                let region = local_region(&grid, i, j, r_theta, &loc).unwrap();
                // Independent emptiness scan over candidate rows.
                let mut empty = true;
                'scan: for (row, row_obs) in obs_by_row.iter().enumerate() {
                    if (grid.theta(row) - region.center_theta).abs() >= r_theta {
                        continue;
                    }
                    for &obs_idx in row_obs {
                        let (oi, oj) = (obs_idx / grid.n_lon(), obs_idx % grid.n_lon());
                        if region.contains(grid.theta(oi), grid.phi(oj)) {
                            empty = false;
                            break 'scan;
                        }
                    }
                }
                let pixel = grid.index(i, j);
                if empty {
                    for (member, fc) in analysis.members().iter().zip(&forecast) {
                        assert_eq!(
                            member.data()[pixel].to_bits(),
                            fc[pixel].to_bits(),
                            "epoch {epoch}: LETKF changed unobserved pixel ({i}, {j})"
                        );
                    }
                } else {
                    letkf_updated_pixels += 1;
                }
            }
        }

        if epoch == 20 {
            let etkf_std = ensemble_std(&exp.branches()[0].ensemble);
            let observed: HashSet<usize> = obs
                .records()
                .iter()
                .map(|r| grid.index(r.row, r.col))
                .collect();
            let mut now = Vec::new();
            let mut init = Vec::new();
            for idx in 0..grid.n_pixels() {
                if !observed.contains(&idx) {
                    now.push(etkf_std.data()[idx]);
                    init.push(initial_std.data()[idx]);
                }
            }
            now.sort_by(|a, b| a.partial_cmp(b).unwrap());
            init.sort_by(|a, b| a.partial_cmp(b).unwrap());
            etkf_median_unobs = now[now.len() / 2];
            initial_median_unobs = init[init.len() / 2];
        }
    }

    assert!(letkf_updated_pixels > 0, "LETKF never updated any sampled pixel");
    assert!(
        etkf_median_unobs < 0.5 * initial_median_unobs,
        "ETKF unobserved-pixel spread did not collapse: {etkf_median_unobs} vs initial {initial_median_unobs}"
    );
    report(4, "ensemble-collapse reproduction", started, Duration::from_secs(600));
}

/// Criterion 5: ENLS locality, exhaustive on an 8x16 grid: perturbing an
/// unobserved pixel changes no other pixel, and perturbing one observation
/// changes exactly one pixel; < 10 s.
#[test]
fn criterion_05_enls_locality() {
    let started = Instant::now();
    let grid = Grid::new(8, 16).unwrap();
    let k = 8;
    let e = random_ensemble(grid, k, 505, 4.0);
    let mut rng = stream_rng(505, 1);

    let records: Vec<ObsRecord> = (0..grid.n_pixels())
        .filter(|p| (p / grid.n_lon() + p % grid.n_lon()).is_multiple_of(2))
        .map(|p| ObsRecord {
            row: p / grid.n_lon(),
            col: p % grid.n_lon(),
            value: 4.0 * normal(&mut rng),
            sigma: 0.5,
        })
        .collect();
    let obs = ObservationSet::new(grid, 0.0, records.clone()).unwrap();
    let observed: HashSet<usize> = records
        .iter()
        .map(|r| grid.index(r.row, r.col))
        .collect();
    let cfg = AssimConfig::new(Method::Enls);
    let base = enls_assimilate(&e, &obs, &cfg).unwrap();

    // Perturbing any single unobserved pixel changes no other pixel.
    for pixel in (0..grid.n_pixels()).filter(|p| !observed.contains(p)) {
        let mut perturbed = e.clone();
        perturbed.members_mut()[0].data_mut()[pixel] += 1.0;
        let analyzed = enls_assimilate(&perturbed, &obs, &cfg).unwrap();
        for (member, (ma, mb)) in analyzed.members().iter().zip(base.members()).enumerate() {
            for idx in 0..grid.n_pixels() {
                if idx == pixel {
                    continue;
                }
                assert_eq!(
                    ma.data()[idx].to_bits(),
                    mb.data()[idx].to_bits(),
                    "perturbing pixel {pixel} leaked into pixel {idx} of member {member}"
                );
            }
        }
        // The perturbed pixel itself carries exactly the perturbation.
        assert_eq!(analyzed.member(0).data()[pixel], base.member(0).data()[pixel] + 1.0);
    }

    // Perturbing one observation changes exactly one pixel's analysis.
    for (rec_idx, rec) in records.iter().enumerate() {
        let mut recs = records.clone();
        recs[rec_idx].value += 1.0;
        let obs2 = ObservationSet::new(grid, 0.0, recs).unwrap();
        let analyzed = enls_assimilate(&e, &obs2, &cfg).unwrap();
        let target = grid.index(rec.row, rec.col);
        let mut changed = false;
        for (ma, mb) in analyzed.members().iter().zip(base.members()) {
            for idx in 0..grid.n_pixels() {
                if ma.data()[idx].to_bits() != mb.data()[idx].to_bits() {
                    assert_eq!(idx, target, "observation {rec_idx} changed pixel {idx}");
                    changed = true;
                }
            }
        }
        assert!(changed, "observation {rec_idx} changed nothing");
    }
    report(5, "ENLS locality", started, Duration::from_secs(10));
}

/// Criterion 6: perturbing an observation outside a pixel's localization
/// region leaves that pixel's LETKF analysis bit-identical; 100 randomized
/// (pixel, observation) pairs; < 30 s.
#[test]
fn criterion_06_letkf_locality() {
    let started = Instant::now();
    let grid = Grid::new(24, 48).unwrap();
    let k = 8;
    let e = random_ensemble(grid, k, 606, 4.0);
    let mut rng = stream_rng(606, 1);

    let mut records = Vec::new();
    for p in 0..grid.n_pixels() {
        if rng.uniform() < 0.4 {
            records.push(ObsRecord {
                row: p / grid.n_lon(),
                col: p % grid.n_lon(),
                value: 4.0 * normal(&mut rng),
                sigma: 0.3 + 0.7 * rng.uniform(),
            });
        }
    }
    let obs = ObservationSet::new(grid, 0.0, records.clone()).unwrap();
    let mut cfg = AssimConfig::new(Method::Letkf);
    cfg.rho = 1.3;
    let base = letkf_assimilate(&e, &obs, &cfg).unwrap();

    let mut pairs = 0;
    for trial in 0..10u64 {
        let rec_idx = (stream_rng(607, trial).uniform() * records.len() as f64) as usize;
        let rec = records[rec_idx];
        let mut recs = records.clone();
        recs[rec_idx].value += 0.7;
        let obs2 = ObservationSet::new(grid, 0.0, recs).unwrap();
        let analyzed = letkf_assimilate(&e, &obs2, &cfg).unwrap();

        // Sample pixels whose region excludes the perturbed observation.
        let mut picked = 0;
        let mut pick_rng = stream_rng(608, trial);
        while picked < 10 {
            let pixel = (pick_rng.uniform() * grid.n_pixels() as f64) as usize;
            let (i, j) = (pixel / grid.n_lon(), pixel % grid.n_lon());
            let region = local_region(&grid, i, j, cfg.r_theta, &cfg.loc).unwrap();
            if region.contains(grid.theta(rec.row), grid.phi(rec.col)) {
                continue;
            }
            for (member, (ma, mb)) in analyzed.members().iter().zip(base.members()).enumerate()
            {
                assert_eq!(
                    ma.data()[pixel].to_bits(),
                    mb.data()[pixel].to_bits(),
                    "trial {trial}: perturbed obs {rec_idx} reached pixel ({i}, {j}) member {member}"
                );
            }
            picked += 1;
            pairs += 1;
        }
    }
    assert_eq!(pairs, 100);
    report(6, "LETKF locality", started, Duration::from_secs(30));
}

/// Criterion 7: inflation preserves the mean to 1e-12 relative, scales the
/// pixel standard deviation by exactly rho, and is the bit-level identity
/// at rho = 1.
#[test]
fn criterion_07_inflation_contract() {
    let started = Instant::now();
    for (k, seed) in [(2usize, 1u64), (8, 2), (16, 3)] {
        let grid = Grid::new(12, 24).unwrap();
        let e = random_ensemble(grid, k, 700 + seed, 5.0);
        for rho in [0.5, 1.5, 2.5] {
            let inflated = inflate(&e, rho).unwrap();
            let m0 = ensemble_mean(&e);
            let m1 = ensemble_mean(&inflated);
            for (a, b) in m0.data().iter().zip(m1.data()) {
                assert!(
                    (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                    "mean moved: {a} vs {b}"
                );
            }
            let s0 = ensemble_std(&e);
            let s1 = ensemble_std(&inflated);
            for (a, b) in s0.data().iter().zip(s1.data()) {
                assert!(
                    (rho * a - b).abs() <= 1e-12 * (rho * a).abs().max(1e-30),
                    "std did not scale by rho: {a} -> {b}"
                );
            }
        }
        let identity = inflate(&e, 1.0).unwrap();
        for (ma, mb) in e.members().iter().zip(identity.members()) {
            for (a, b) in ma.data().iter().zip(mb.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
    report(7, "inflation contract", started, Duration::from_secs(10));
}

/// Criterion 8: rotation advection preserves each row's signed sum to
/// 1e-12 relative and the supergranular step preserves the area-weighted
/// signed total to 1e-10 relative; 100 random maps; < 30 s.
#[test]
fn criterion_08_transport_conservation() {
    let started = Instant::now();
    let grid = Grid::new(36, 72).unwrap();
    let p = TransportParams::default();
    for seed in 0..100u64 {
        let mut map = SynopticMap::zeros(grid);
        let stream = StepStream::new(800 + seed, 0, 0);
        for idx in 0..grid.n_pixels() {
            let mut rng = stream.pixel(StreamDomain::Init, idx as u64);
            // Offset keeps totals away from zero so relative tolerances bite.
            map.data_mut()[idx] = 5.0 + 4.0 * (rng.uniform() - 0.5);
        }

        let rotated = advect_rotation(&map, &p);
        for i in 0..grid.n_lat() {
            let before: f64 = (0..grid.n_lon()).map(|j| map.get(i, j)).sum();
            let after: f64 = (0..grid.n_lon()).map(|j| rotated.get(i, j)).sum();
            assert!(
                (before - after).abs() <= 1e-12 * before.abs(),
                "seed {seed} row {i}: {before} vs {after}"
            );
        }

        let diffused = supergranular_step(&map, &p, StepStream::new(800 + seed, 0, 1));
        let (s0, _) = flux_balance(&map);
        let (s1, _) = flux_balance(&diffused);
        assert!(
            (s0 - s1).abs() <= 1e-10 * s0.abs(),
            "seed {seed}: signed total {s0} vs {s1}"
        );
    }
    report(8, "transport conservation", started, Duration::from_secs(30));
}

/// Criterion 9: one day of random emergence on a zero full-scale map has a
/// sample absolute mean within 2% of 2.1 G; < 5 s.
#[test]
fn criterion_09_emergence_calibration() {
    let started = Instant::now();
    let grid = Grid::new(180, 360).unwrap();
    let map = SynopticMap::zeros(grid);
    let p = TransportParams::default();
    assert_eq!(p.emergence_abs_mean, 2.1);
    assert_eq!(p.dt, 86_400.0);
    let out = random_emergence(&map, &p, StepStream::new(909, 0, 0));
    let mean_abs = out.data().iter().map(|v| v.abs()).sum::<f64>() / grid.n_pixels() as f64;
    assert!(
        (mean_abs - 2.1).abs() / 2.1 < 0.02,
        "daily absolute mean {mean_abs} not within 2% of 2.1"
    );
    report(9, "emergence calibration", started, Duration::from_secs(5));
}

/// Criterion 10: the compare runner is deterministic: equal configurations
/// produce byte-identical CSVs and map files, including across different
/// thread counts; < 10 min.
#[test]
fn criterion_10_determinism() {
    let started = Instant::now();
    let cfg = RunConfig {
        n_lat: 45,
        n_lon: 90,
        k: 6,
        seed: 1010,
        duration_seconds: 10.0 * 86_400.0,
        ..RunConfig::default()
    };

    let dir = tempfile::tempdir().unwrap();
    let out_serial = dir.path().join("serial");
    let out_wide = dir.path().join("wide");
    let out_repeat = dir.path().join("repeat");

    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_compare(&cfg, &out_serial))
        .unwrap();
    rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_compare(&cfg, &out_wide))
        .unwrap();
    run_compare(&cfg, &out_repeat).unwrap();

    let mut names: Vec<String> = fs::read_dir(&out_serial)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"rmse.csv".to_string()));
    assert!(names.iter().any(|n| n.starts_with("letkf_mean")));
    for name in &names {
        let a = fs::read(out_serial.join(name)).unwrap();
        let b = fs::read(out_wide.join(name)).unwrap();
        let c = fs::read(out_repeat.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between 1 and 4 threads");
        assert_eq!(a, c, "{name} differs between repeated runs");
    }
    report(10, "determinism", started, Duration::from_secs(600));
}

/// Criterion 11: the compare harness emits a three-method RMSE series from
/// one observation sequence; series are aligned, nonnegative, and the
/// no-assimilation baseline dominates every method's mean RMSE over the
/// final 30 epochs of the default experiment; < 15 min.
#[test]
fn criterion_11_rmse_harness() {
    let started = Instant::now();
    let cfg = RunConfig::default();
    assert_eq!(cfg.n_epochs(), 60);

    let dir = tempfile::tempdir().unwrap();
    run_compare(&cfg, dir.path()).unwrap();

    let text = fs::read_to_string(dir.path().join("rmse.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epoch_seconds,rmse_gauss,method");
    let mut by_method: std::collections::HashMap<String, Vec<(f64, f64)>> =
        std::collections::HashMap::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3, "bad row {line}");
        let epoch: f64 = fields[0].parse().unwrap();
        let rmse: f64 = fields[1].parse().unwrap();
        assert!(rmse.is_finite() && rmse >= 0.0, "bad RMSE in {line}");
        by_method
            .entry(fields[2].to_string())
            .or_default()
            .push((epoch, rmse));
    }

    let methods = ["none", "enls", "etkf", "letkf"];
    for method in methods {
        assert_eq!(by_method[method].len(), 60, "{method} epoch count");
    }
    let epochs_of = |m: &str| -> Vec<f64> { by_method[m].iter().map(|(e, _)| *e).collect() };
    let baseline_epochs = epochs_of("none");
    for method in ["enls", "etkf", "letkf"] {
        assert_eq!(epochs_of(method), baseline_epochs, "{method} epochs differ");
    }

    let mean_tail = |m: &str| -> f64 {
        let series = &by_method[m];
        let tail = &series[series.len() - 30..];
        tail.iter().map(|(_, v)| v).sum::<f64>() / tail.len() as f64
    };
    let baseline = mean_tail("none");
    for method in ["enls", "etkf", "letkf"] {
        let value = mean_tail(method);
        assert!(
            baseline > value,
            "baseline mean tail RMSE {baseline} does not dominate {method} ({value})"
        );
    }
    report(11, "RMSE harness", started, Duration::from_secs(900));
}
