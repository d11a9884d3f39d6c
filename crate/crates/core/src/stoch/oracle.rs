use rand::Rng;

use super::{
    apply, check_inputs, exit_rate_sup, positive, stream_rng, Driver, Observer, Recorder, RunStats,
    SimOptions, Trajectory,
};
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{ChannelModel, SystemState};

/// Largest allowed `max exit rate * dt`.
pub const ORACLE_MAX_STEP_PROBABILITY: f64 = 0.1;

/// Fixed-step Euler jump scheme: advance the voltage by `dt` (shortened so
/// that the steps tile `[t, t_end]`), then for every `(k, i)` jump from `a`
/// to `b` with probability `A[i][(a,b)](V[k]) dt`, at most once per step.
///
/// Only `dt` small against the rates is meaningful; the step is rejected if
/// `max exit rate * dt` over the operating range exceeds 0.1.
#[allow(clippy::too_many_arguments)]
pub fn oracle_run<R: Rng>(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &mut SystemState,
    t_end: f64,
    dt: f64,
    options: &SimOptions,
    rng: &mut R,
    observer: &mut dyn Observer,
) -> Result<RunStats> {
    check_inputs(lattice, model, state, t_end)?;
    positive("dt", dt)?;
    let stochastic: Vec<usize> = (0..model.types())
        .filter(|&i| model.is_stochastic(i))
        .collect();
    let mut max_exit: f64 = 0.0;
    for &i in &stochastic {
        for a in 0..model.configs() {
            max_exit = max_exit.max(exit_rate_sup(model, i, a, options.bound.samples)?);
        }
    }
    if max_exit * dt > ORACLE_MAX_STEP_PROBABILITY {
        return Err(Error::OracleStep {
            dt,
            product: max_exit * dt,
        });
    }

    let mut driver = Driver::new(lattice, model, state, t_end, options)?;
    let t0 = state.t;
    let steps = ((t_end - t0) / dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let h = (t_end - t0) / steps as f64;
    let mut stats = RunStats::default();
    observer.snapshot(state)?;

    for s in 1..=steps {
        let t1 = if s == steps { t_end } else { t0 + s as f64 * h };
        driver.advance(state, t1, observer)?;
        let mut jumped = false;
        for k in 0..lattice.n() {
            let v = state.v[k];
            for &i in &stochastic {
                stats.candidates += 1;
                let a = state.config(k, i);
                // one uniform decides both whether and where to jump
                let u: f64 = rng.random::<f64>() / h;
                let mut acc = 0.0;
                for &b in model.targets(i, a) {
                    acc += model.rate(i, a, b, v);
                    if u < acc {
                        apply(state, k, i, b, observer);
                        stats.events += 1;
                        jumped = true;
                        break;
                    }
                }
            }
        }
        if jumped {
            observer.snapshot(state)?;
        }
    }
    Ok(stats)
}

/// Records an oracle path from a copy of `state`, seeded by `seed`.
pub fn oracle_simulate(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &SystemState,
    t_end: f64,
    dt: f64,
    options: &SimOptions,
    seed: u64,
) -> Result<Trajectory> {
    let mut state = state.clone();
    let mut recorder = Recorder::new();
    let stats = oracle_run(
        lattice,
        model,
        &mut state,
        t_end,
        dt,
        options,
        &mut stream_rng(seed, 0),
        &mut recorder,
    )?;
    Ok(recorder.finish(stats))
}
