use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convergence::ModelSpec;
use super::with_pool;
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{sample_initial_state_with, ChannelModel, InitialData, SystemState};
use crate::stoch::{run, stream_rng, Algorithm, Observer, SimOptions};

/// Records `V[k]` on a fixed time grid from a snapshot stream, interpolating
/// linearly if a grid time falls between snapshots.
pub struct SiteSampler {
    k: usize,
    grid: Vec<f64>,
    pub values: Vec<f64>,
    last: Option<(f64, f64)>,
}

impl SiteSampler {
    pub fn new(k: usize, grid: Vec<f64>) -> Self {
        Self {
            k,
            values: Vec::with_capacity(grid.len()),
            grid,
            last: None,
        }
    }
}

impl Observer for SiteSampler {
    fn snapshot(&mut self, state: &SystemState) -> crate::Result<()> {
        let (t, v) = (state.t, state.v[self.k]);
        while let Some(&g) = self.grid.get(self.values.len()) {
            if g > t {
                break;
            }
            let x = match self.last {
                Some((t0, v0)) if g < t && t > t0 => v0 + (v - v0) * (g - t0) / (t - t0),
                _ => v,
            };
            self.values.push(x);
        }
        self.last = Some((t, v));
        Ok(())
    }
}

/// PET against IL at one spacing and several leap sizes, measured at the
/// site nearest the middle of the circle.
#[derive(Debug, Clone)]
pub struct AlgoErrorConfig {
    pub model: ModelSpec,
    pub length: f64,
    pub diffusivity: f64,
    pub h: f64,
    pub taus: Vec<f64>,
    pub samples: usize,
    pub t_end: f64,
    /// Points of the common time grid after `t = 0`.
    pub grid_points: usize,
    pub sim: SimOptions,
    pub seed: u64,
    pub bootstrap: usize,
    pub workers: usize,
}

impl AlgoErrorConfig {
    pub fn toy(h: f64, taus: Vec<f64>, samples: usize, seed: u64) -> Self {
        Self {
            model: ModelSpec::preset("toy"),
            length: 16.0,
            diffusivity: 1.0,
            h,
            taus,
            samples,
            t_end: 15.0,
            grid_points: 512,
            sim: SimOptions::default(),
            seed,
            bootstrap: 200,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoErrorEstimate {
    pub h: f64,
    pub tau: f64,
    pub site: usize,
    pub samples: usize,
    /// `sup_t |mean V_PET - mean V_IL|` at the tracked site.
    pub estimate: f64,
    /// Bootstrap standard error of the estimate.
    pub standard_error: f64,
}

/// `runs` paths of `algorithm` recorded at site `k` on `grid`; run `r` uses
/// stream `first_stream + r`.
#[allow(clippy::too_many_arguments)]
pub fn site_runs(
    lattice: &CircleLattice,
    model: &ChannelModel,
    init: &InitialData,
    algorithm: Algorithm,
    step: f64,
    t_end: f64,
    k: usize,
    grid: &[f64],
    sim: &SimOptions,
    seed: u64,
    first_stream: u64,
    runs: usize,
) -> Result<Vec<Vec<f64>>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, first_stream + r);
            let mut state = sample_initial_state_with(lattice, init, &mut rng)?;
            let mut sampler = SiteSampler::new(k, grid.to_vec());
            run(
                algorithm,
                lattice,
                model,
                &mut state,
                t_end,
                step,
                sim,
                &mut rng,
                &mut sampler,
            )?;
            if sampler.values.len() != grid.len() {
                return Err(Error::Data(format!(
                    "run {r} covered {} of {} grid points",
                    sampler.values.len(),
                    grid.len()
                )));
            }
            Ok(sampler.values)
        })
        .collect()
}

fn mean_series(runs: &[Vec<f64>], pick: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut acc = vec![0.0; runs[0].len()];
    let mut count = 0usize;
    for r in pick {
        for (a, x) in acc.iter_mut().zip(&runs[r]) {
            *a += x;
        }
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `sup_t |mean(a) - mean(b)|` over the grid, with a bootstrap standard
/// error from `bootstrap` independent resamplings of both groups.
pub fn compare_site_means(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    bootstrap: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("both groups need at least one run".into()));
    }
    let estimate = sup_gap(&mean_series(a, 0..a.len()), &mean_series(b, 0..b.len()));
    if bootstrap < 2 {
        return Ok((estimate, f64::NAN));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    let reps: Vec<f64> = (0..bootstrap)
        .map(|_| {
            let ia: Vec<usize> = (0..a.len()).map(|_| rng.random_range(0..a.len())).collect();
            let ib: Vec<usize> = (0..b.len()).map(|_| rng.random_range(0..b.len())).collect();
            sup_gap(
                &mean_series(a, ia.into_iter()),
                &mean_series(b, ib.into_iter()),
            )
        })
        .collect();
    let m = reps.iter().sum::<f64>() / bootstrap as f64;
    let var = reps.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (bootstrap - 1) as f64;
    Ok((estimate, var.sqrt()))
}

/// One PET reference sample shared by every leap size; IL sample `c` uses
/// streams after the reference's.
pub fn algorithmic_error(config: &AlgoErrorConfig) -> Result<Vec<AlgoErrorEstimate>> {
    if config.samples == 0 || config.grid_points == 0 {
        return Err(Error::Parameter {
            name: "experiment.samples".into(),
            reason: "needs at least one sample and one grid point".into(),
        });
    }
    let lattice = CircleLattice::from_spacing(config.h, config.length, config.diffusivity)?;
    let (model, init) = config.model.build(&lattice)?;
    let site = lattice.nearest(config.length / 2.0);
    let g = config.grid_points;
    let grid: Vec<f64> = (0..=g)
        .map(|i| {
            if i == g {
                config.t_end
            } else {
                config.t_end * i as f64 / g as f64
            }
        })
        .collect();
    let n = config.samples;
    with_pool(config.workers, || {
        let reference = site_runs(
            &lattice,
            &model,
            &init,
            Algorithm::Pet,
            0.0,
            config.t_end,
            site,
            &grid,
            &config.sim,
            config.seed,
            0,
            n,
        )?;
        config
            .taus
            .iter()
            .enumerate()
            .map(|(c, &tau)| {
                let leaped = site_runs(
                    &lattice,
                    &model,
                    &init,
                    Algorithm::Il,
                    tau,
                    config.t_end,
                    site,
                    &grid,
                    &config.sim,
                    config.seed,
                    ((c + 1) * n) as u64,
                    n,
                )?;
                let (estimate, standard_error) = compare_site_means(
                    &reference,
                    &leaped,
                    config.bootstrap,
                    config.seed ^ c as u64,
                )?;
                Ok(AlgoErrorEstimate {
                    h: config.h,
                    tau,
                    site,
                    samples: n,
                    estimate,
                    standard_error,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_hits_grid_points() {
        let mut s = SiteSampler::new(0, vec![0.0, 0.5, 1.0]);
        for (t, v) in [(0.0, 1.0), (0.25, 2.0), (0.75, 4.0), (1.0, 5.0)] {
            s.snapshot(&SystemState::uniform(t, vec![v], 1, 1, 0).unwrap())
                .unwrap();
        }
        assert_eq!(s.values, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn same_runs_give_zero() {
        let lat = CircleLattice::from_spacing(0.5, 4.0, 1.0).unwrap();
        let (model, init) = ModelSpec::preset("toy").build(&lat).unwrap();
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let opts = SimOptions::default();
        let a = site_runs(
            &lat,
            &model,
            &init,
            Algorithm::Pet,
            0.0,
            1.0,
            4,
            &grid,
            &opts,
            5,
            0,
            10,
        )
        .unwrap();
        let b = site_runs(
            &lat,
            &model,
            &init,
            Algorithm::Pet,
            0.0,
            1.0,
            4,
            &grid,
            &opts,
            5,
            0,
            10,
        )
        .unwrap();
        let (est, se) = compare_site_means(&a, &b, 50, 1).unwrap();
        assert_eq!(est, 0.0);
        assert!(se >= 0.0);
        let c = site_runs(
            &lat,
            &model,
            &init,
            Algorithm::Il,
            0.125,
            1.0,
            4,
            &grid,
            &opts,
            5,
            10,
            10,
        )
        .unwrap();
        let (est, se) = compare_site_means(&a, &c, 50, 1).unwrap();
        assert!(est > 0.0 && se > 0.0);
    }

    #[test]
    fn small_algorithmic_error_run() {
        let mut c = AlgoErrorConfig::toy(0.5, vec![0.25, 0.125], 8, 3);
        c.length = 4.0;
        c.t_end = 1.0;
        c.grid_points = 16;
        c.bootstrap = 20;
        c.workers = 1;
        let est = algorithmic_error(&c).unwrap();
        assert_eq!(est.len(), 2);
        assert_eq!(est[0].site, 4);
        assert!(est
            .iter()
            .all(|e| e.estimate.is_finite() && e.standard_error.is_finite()));
    }
}
