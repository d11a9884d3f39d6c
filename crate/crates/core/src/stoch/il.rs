use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{
    apply, check_inputs, positive, rate_bound, stream_rng, thin, Driver, Observer, Recorder,
    RunStats, SimOptions, Trajectory,
};
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{ChannelModel, SystemState};

/// Inexact leaping with step `tau` (the last step is shortened to end at
/// `t_end`).
///
/// Per step: `m ~ Poisson(tau Lambda)`, integrate the voltage over the step
/// with the occupancy frozen, then run `m` thinning trials in sequence
/// against the post-step voltage, updating the occupancy as they go. All
/// events of a step carry the step's end time.
#[allow(clippy::too_many_arguments)]
pub fn il_run<R: Rng>(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &mut SystemState,
    t_end: f64,
    tau: f64,
    options: &SimOptions,
    rng: &mut R,
    observer: &mut dyn Observer,
) -> Result<RunStats> {
    check_inputs(lattice, model, state, t_end)?;
    positive("tau", tau)?;
    let bound = rate_bound(model, lattice.n(), &options.bound)?;
    let mut driver = Driver::new(lattice, model, state, t_end, options)?;
    let mut stats = RunStats::default();
    let n = lattice.n();
    let t0 = state.t;
    observer.snapshot(state)?;

    let mut step = 0u64;
    while state.t < t_end {
        step += 1;
        let t1 = (t0 + step as f64 * tau).min(t_end);
        let mean = bound.lambda_global * (t1 - state.t);
        let m = if mean > 0.0 {
            let poisson = Poisson::new(mean).map_err(|e| Error::Parameter {
                name: "tau".into(),
                reason: format!("Poisson mean {mean}: {e}"),
            })?;
            poisson.sample(rng) as u64
        } else {
            0
        };
        driver.advance(state, t1, observer)?;
        let mut jumped = false;
        for _ in 0..m {
            stats.candidates += 1;
            let k = rng.random_range(0..n);
            let i = bound.pick_type(rng.random::<f64>());
            if let Some(to) = thin(model, &bound, state, k, i, state.v[k], state.t, rng)? {
                apply(state, k, i, to, observer);
                stats.events += 1;
                jumped = true;
            }
        }
        if jumped {
            observer.snapshot(state)?;
        }
    }
    stats.bound = Some(bound);
    Ok(stats)
}

/// Records an IL path from a copy of `state`, seeded by `seed`.
pub fn il_simulate(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &SystemState,
    t_end: f64,
    tau: f64,
    options: &SimOptions,
    seed: u64,
) -> Result<Trajectory> {
    let mut state = state.clone();
    let mut recorder = Recorder::new();
    let stats = il_run(
        lattice,
        model,
        &mut state,
        t_end,
        tau,
        options,
        &mut stream_rng(seed, 0),
        &mut recorder,
    )?;
    Ok(recorder.finish(stats))
}
