//! Stochastic simulation of the coupled voltage / channel process.
//!
//! * [`pet_simulate`]: pseudo-exact thinning. Candidate events arrive at the
//!   global bound `Lambda`; between them the voltage is integrated with the
//!   occupancy frozen, and each candidate is accepted with probability
//!   (true exit rate) / (bound).
//! * [`il_simulate`]: inexact leaping. Fixed steps `tau`, a Poisson number of
//!   candidates per step, all thinned against the end-of-step voltage.
//! * [`oracle_simulate`]: fixed-step Euler jump scheme, for cross-checks.
//!
//! Each simulator has a `*_run` form that streams to an [`Observer`] and
//! draws from a caller-supplied generator, and a `*_simulate` form that
//! records a [`Trajectory`] from a seed.

mod bound;
mod il;
mod oracle;
mod pet;
mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bound::{exit_rate_sup, rate_bound, BoundOptions, BoundPolicy, RateBound};
pub use il::{il_run, il_simulate};
pub use oracle::{oracle_run, oracle_simulate, ORACLE_MAX_STEP_PROBABILITY};
pub use pet::{pet_run, pet_simulate};
pub use trajectory::{Event, NullObserver, Observer, Recorder, RunStats, Tee, Trajectory};

use crate::det::FrozenIntegrator;
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{categorical, ChannelModel, SystemState};

/// Generator for run `run` of an experiment seeded with `seed`: ChaCha8 keyed
/// by `seed`, on stream `run`. Streams never overlap.
pub fn stream_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Which simulator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pet,
    Il,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pet => "pet",
            Algorithm::Il => "il",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings shared by the simulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Longest voltage substep.
    pub dt_max: f64,
    /// Spacing of the recording grid; `None` means `T / 512`.
    pub record_dt: Option<f64>,
    pub bound: BoundOptions,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt_max: 1e-2,
            record_dt: None,
            bound: BoundOptions::default(),
        }
    }
}

/// Dispatches to the chosen simulator; `step` is `tau` for IL and `dt` for
/// the oracle and is ignored by PET.
#[allow(clippy::too_many_arguments)]
pub fn run<R: Rng>(
    algorithm: Algorithm,
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &mut SystemState,
    t_end: f64,
    step: f64,
    options: &SimOptions,
    rng: &mut R,
    observer: &mut dyn Observer,
) -> Result<RunStats> {
    match algorithm {
        Algorithm::Pet => pet_run(lattice, model, state, t_end, options, rng, observer),
        Algorithm::Il => il_run(lattice, model, state, t_end, step, options, rng, observer),
        Algorithm::Oracle => oracle_run(lattice, model, state, t_end, step, options, rng, observer),
    }
}

fn check_inputs(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &SystemState,
    t_end: f64,
) -> Result<()> {
    if state.n() != lattice.n() {
        return Err(Error::Dimension(format!(
            "state has {} compartments, lattice {}",
            state.n(),
            lattice.n()
        )));
    }
    if state.types() != model.types() || state.configs() != model.configs() {
        return Err(Error::Dimension(format!(
            "state is {} x {}, model {} x {}",
            state.types(),
            state.configs(),
            model.types(),
            model.configs()
        )));
    }
    if !(t_end > state.t) || !t_end.is_finite() {
        return Err(Error::Parameter {
            name: "T".into(),
            reason: format!(
                "horizon {t_end} must be finite and after the start time {}",
                state.t
            ),
        });
    }
    Ok(())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: name.into(),
            reason: format!("must be positive, got {x}"),
        })
    }
}

/// Recording grid `t0 + g dt`, `g = 1..=count`, ending exactly at `t_end`.
struct Grid {
    t0: f64,
    t_end: f64,
    dt: f64,
    count: usize,
    next: usize,
}

impl Grid {
    fn new(t0: f64, t_end: f64, record_dt: Option<f64>) -> Result<Self> {
        let span = t_end - t0;
        let dt = record_dt.unwrap_or(span / 512.0);
        positive("record_dt", dt)?;
        let count = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self {
            t0,
            t_end,
            dt,
            count,
            next: 1,
        })
    }

    fn peek(&self) -> Option<f64> {
        match self.next {
            g if g > self.count => None,
            g if g == self.count => Some(self.t_end),
            g => Some(self.t0 + g as f64 * self.dt),
        }
    }
}

/// Frozen-occupancy integration with snapshots on the recording grid.
struct Driver<'a> {
    lattice: &'a CircleLattice,
    model: &'a ChannelModel,
    integrator: FrozenIntegrator,
    dt_max: f64,
    grid: Grid,
}

impl<'a> Driver<'a> {
    fn new(
        lattice: &'a CircleLattice,
        model: &'a ChannelModel,
        state: &SystemState,
        t_end: f64,
        options: &SimOptions,
    ) -> Result<Self> {
        positive("dt_max", options.dt_max)?;
        Ok(Self {
            lattice,
            model,
            integrator: FrozenIntegrator::new(lattice.n()),
            dt_max: options.dt_max,
            grid: Grid::new(state.t, t_end, options.record_dt)?,
        })
    }

    fn integrate(&mut self, state: &mut SystemState, t1: f64) -> Result<()> {
        let t0 = state.t;
        let (v, sites) = state.split_mut();
        self.integrator
            .advance(self.lattice, self.model, &sites, v, t0, t1, self.dt_max)?;
        state.t = t1;
        Ok(())
    }

    /// Integrates to `t1`, snapshotting at every grid time passed on the way
    /// (including `t1` itself if it is a grid time).
    fn advance(
        &mut self,
        state: &mut SystemState,
        t1: f64,
        observer: &mut dyn Observer,
    ) -> Result<()> {
        while let Some(tg) = self.grid.peek() {
            if tg > t1 {
                break;
            }
            self.integrate(state, tg)?;
            observer.snapshot(state)?;
            self.grid.next += 1;
        }
        if t1 > state.t {
            self.integrate(state, t1)?;
        }
        Ok(())
    }
}

/// Thinning trial for a candidate at `(k, i)` seeing voltage `v` at time
/// `t`: accepts with probability `exit_rate / bound` and returns the
/// destination.
#[inline]
#[allow(clippy::too_many_arguments)]
fn thin<R: Rng>(
    model: &ChannelModel,
    bound: &RateBound,
    state: &SystemState,
    k: usize,
    i: usize,
    v: f64,
    t: f64,
    rng: &mut R,
) -> Result<Option<usize>> {
    let a = state.config(k, i);
    let exit = model.exit_rate(i, a, v);
    let probability = exit / bound.per_type[i];
    if !(probability <= 1.0 + 1e-12) {
        return Err(Error::BoundViolation {
            t,
            compartment: k,
            channel: i,
            v,
            probability,
        });
    }
    if rng.random::<f64>() >= probability {
        return Ok(None);
    }
    Ok(Some(destination(model, i, a, v, rng)))
}

/// Destination of a jump out of `a`, in proportion to the individual rates.
#[inline]
fn destination<R: Rng>(model: &ChannelModel, i: usize, a: usize, v: f64, rng: &mut R) -> usize {
    let targets = model.targets(i, a);
    if targets.len() == 1 {
        return targets[0];
    }
    let rates: Vec<f64> = targets.iter().map(|&b| model.rate(i, a, b, v)).collect();
    targets[categorical(&rates, rng)]
}

fn apply(
    state: &mut SystemState,
    k: usize,
    i: usize,
    to: usize,
    observer: &mut dyn Observer,
) -> Event {
    let event = Event {
        t: state.t,
        k,
        i,
        from: state.config(k, i),
        to,
    };
    state.set_config(k, i, to);
    observer.event(&event);
    event
}
