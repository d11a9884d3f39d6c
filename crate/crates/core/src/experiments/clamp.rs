use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{ChannelModel, SystemState};
use crate::presets::{preset_model, PresetParams};
use crate::stoch::{pet_run, stream_rng, BoundPolicy, NullObserver, SimOptions};

/// Hodgkin-Huxley sodium channels at a clamped voltage: `sites` independent
/// copies of the 16-state chain started fully closed, simulated as lattices
/// of `batch` uncoupled sites (PET work per event grows with the lattice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampConfig {
    /// Clamp voltage (mV).
    pub v: f64,
    pub sites: usize,
    pub batch: usize,
    /// Run length (ms), long against the gate relaxation times.
    pub t_end: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ClampConfig {
    fn default() -> Self {
        Self {
            v: -30.0,
            sites: 10_000,
            batch: 32,
            t_end: 20.0,
            seed: 1,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampReport {
    pub v: f64,
    pub sites: usize,
    pub t_end: f64,
    /// Fraction of sites in the conducting configuration at `t_end`.
    pub fraction: f64,
    pub standard_error: f64,
    /// Steady-state open probabilities of one `m` and the `h` gate.
    pub m: f64,
    pub h: f64,
    /// `m^3 h`.
    pub product: f64,
    /// Conducting-state mass of the stationary law of the 16-state generator.
    pub stationary: f64,
    /// `(fraction - product) / standard_error`.
    pub z_score: f64,
}

impl ClampReport {
    pub fn within(&self, standard_errors: f64) -> bool {
        self.z_score.abs() <= standard_errors
    }
}

/// Stationary law of channel type `i` at voltage `v`: solves `pi A = 0`,
/// `sum pi = 1` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn stationary_distribution(model: &ChannelModel, i: usize, v: f64) -> Result<Vec<f64>> {
    let j = model.configs();
    let a = model.transition_rates(v, i)?;
    // rows: equations sum_a pi_a A[a][b] = 0 for b < J-1, then normalisation
    let mut m = vec![vec![0.0; j + 1]; j];
    for b in 0..j - 1 {
        for c in 0..j {
            m[b][c] = a[c * j + b];
        }
    }
    m[j - 1][..j].iter_mut().for_each(|x| *x = 1.0);
    m[j - 1][j] = 1.0;
    for c in 0..j {
        let piv = (c..j)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .expect("non-empty");
        if m[piv][c].abs() < 1e-300 {
            return Err(Error::Data(format!(
                "generator of type {i} at v = {v} is reducible"
            )));
        }
        m.swap(c, piv);
        for r in 0..j {
            if r != c {
                let f = m[r][c] / m[c][c];
                if f != 0.0 {
                    for k in c..=j {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    Ok((0..j).map(|r| m[r][j] / m[r][r]).collect())
}

/// Runs the clamped chains with PET and compares the conducting fraction
/// with the product of the per-gate steady states.
pub fn hh_clamp_check(config: &ClampConfig) -> Result<ClampReport> {
    hh_clamp_check_with(config, &PresetParams::new())
}

/// [`hh_clamp_check`] with overridden gate rates.
pub fn hh_clamp_check_with(config: &ClampConfig, params: &PresetParams) -> Result<ClampReport> {
    if config.sites == 0 || config.batch == 0 || !(config.t_end > 0.0) {
        return Err(Error::Parameter {
            name: "experiment.samples".into(),
            reason: "needs at least one site, a nonzero batch and a positive horizon".into(),
        });
    }
    let n = config.sites;
    let v = config.v;
    let one = CircleLattice::new(1, 1.0, 0.0)?;
    let (model, _) = preset_model("hodgkin-huxley", params, &one, None)?;
    let model = model.without_drift().with_voltage_range(v, v);
    let (am, bm) = (model.rate(0, 0, 1, v), model.rate(0, 1, 0, v));
    let (ah, bh) = (model.rate(0, 0, 8, v), model.rate(0, 8, 0, v));
    let (m, h) = (am / (am + bm), ah / (ah + bh));
    let product = m.powi(3) * h;
    let stationary = stationary_distribution(&model, 0, v)?[15];

    let mut options = SimOptions {
        // the voltage never moves; coarse steps only cost less
        dt_max: config.t_end / 64.0,
        record_dt: Some(config.t_end),
        ..SimOptions::default()
    };
    options.bound.policy = BoundPolicy::Max;
    let batches: Vec<(u64, usize)> = (0..n.div_ceil(config.batch))
        .map(|b| (b as u64, config.batch.min(n - b * config.batch)))
        .collect();
    let run = |&(stream, size): &(u64, usize)| -> Result<usize> {
        let lattice = CircleLattice::new(size, size as f64, 0.0)?;
        let mut state =
            SystemState::uniform(0.0, vec![v; size], model.types(), model.configs(), 0)?;
        pet_run(
            &lattice,
            &model,
            &mut state,
            config.t_end,
            &options,
            &mut stream_rng(config.seed, stream),
            &mut NullObserver,
        )?;
        Ok((0..size).filter(|&k| state.config(k, 0) == 15).count())
    };
    let open: usize = super::with_pool(config.workers, || {
        batches.par_iter().map(run).collect::<Result<Vec<_>>>()
    })??
    .into_iter()
    .sum();
    let fraction = open as f64 / n as f64;
    // the sites are independent, so the count is binomial
    let p = product.clamp(0.0, 1.0);
    let standard_error = (p * (1.0 - p) / n as f64).sqrt();
    Ok(ClampReport {
        v,
        sites: n,
        t_end: config.t_end,
        fraction,
        standard_error,
        m,
        h,
        product,
        stationary,
        z_score: (fraction - product) / standard_error,
    })
}
