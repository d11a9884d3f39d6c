use rand::Rng;
use rand_distr::Exp1;

use super::{
    apply, check_inputs, rate_bound, stream_rng, thin, Driver, Observer, Recorder, RunStats,
    SimOptions, Trajectory,
};
use crate::det::laplacian::second_difference_into;
use crate::error::Result;
use crate::lattice::CircleLattice;
use crate::model::{reaction_into, ChannelModel, SystemState};

/// One integrator step `[t0, t1]` of the frozen-occupancy voltage, with end
/// values and time derivatives for cubic Hermite dense output.
struct Step {
    t0: f64,
    t1: f64,
    v1: Vec<f64>,
    d0: Vec<f64>,
    d1: Vec<f64>,
    scratch: Vec<f64>,
}

impl Step {
    fn new(n: usize) -> Self {
        Self {
            t0: 0.0,
            t1: 0.0,
            v1: vec![0.0; n],
            d0: vec![0.0; n],
            d1: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// `out = D/h^2 Delta v + R(v)` with the occupancy of `state`.
    fn derivative(
        lattice: &CircleLattice,
        model: &ChannelModel,
        state: &SystemState,
        v: &[f64],
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        second_difference_into(v, out);
        reaction_into(model, &state.site_view(), v, scratch);
        let c = lattice.stiffness();
        for (o, r) in out.iter_mut().zip(scratch.iter()) {
            *o = c * *o + r;
        }
    }

    /// Starts a step at `state.t`, ending at the next grid time, after
    /// `dt_max`, or at `t_end`, whichever comes first.
    fn begin(
        &mut self,
        driver: &mut Driver<'_>,
        state: &SystemState,
        t_end: f64,
        fresh_slope: bool,
    ) -> Result<()> {
        let t0 = state.t;
        let mut t1 = (t0 + driver.dt_max).min(t_end);
        if let Some(tg) = driver.grid.peek() {
            // snap to the grid rather than leave a sliver step before it
            if tg - t0 <= driver.dt_max * (1.0 + 1e-9) {
                t1 = tg;
            }
        }
        self.t0 = t0;
        self.t1 = t1;
        if fresh_slope {
            Self::derivative(
                driver.lattice,
                driver.model,
                state,
                &state.v,
                &mut self.scratch,
                &mut self.d0,
            );
        } else {
            std::mem::swap(&mut self.d0, &mut self.d1);
        }
        self.v1.copy_from_slice(&state.v);
        driver.integrator.advance(
            driver.lattice,
            driver.model,
            &state.site_view(),
            &mut self.v1,
            t0,
            t1,
            driver.dt_max,
        )?;
        Self::derivative(
            driver.lattice,
            driver.model,
            state,
            &self.v1,
            &mut self.scratch,
            &mut self.d1,
        );
        Ok(())
    }

    /// Hermite interpolant of `V[k]` at `t` in `[t0, t1]`; `v0` is the
    /// voltage at `t0`.
    #[inline]
    fn voltage(&self, v0: &[f64], k: usize, t: f64) -> f64 {
        let h = self.t1 - self.t0;
        if h <= 0.0 {
            return v0[k];
        }
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * v0[k]
            + (s3 - 2.0 * s2 + s) * h * self.d0[k]
            + (3.0 * s2 - 2.0 * s3) * self.v1[k]
            + (s3 - s2) * h * self.d1[k]
    }
}

/// Pseudo-exact thinning from `state.t` to `t_end`, streaming to `observer`.
///
/// Between accepted events the voltage is advanced in steps of at most
/// `dt_max` (cut at recording-grid times); a rejected candidate reads the
/// voltage from the cubic Hermite interpolant of the current step, and an
/// accepted one integrates the state exactly to its time before jumping.
/// With a zero bound nothing can jump and the voltage is integrated straight
/// to the horizon.
pub fn pet_run<R: Rng>(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &mut SystemState,
    t_end: f64,
    options: &SimOptions,
    rng: &mut R,
    observer: &mut dyn Observer,
) -> Result<RunStats> {
    check_inputs(lattice, model, state, t_end)?;
    let bound = rate_bound(model, lattice.n(), &options.bound)?;
    let mut driver = Driver::new(lattice, model, state, t_end, options)?;
    let mut stats = RunStats::default();
    let n = lattice.n();
    observer.snapshot(state)?;

    if bound.is_zero() {
        driver.advance(state, t_end, observer)?;
        stats.bound = Some(bound);
        return Ok(stats);
    }

    let mut step = Step::new(n);
    step.begin(&mut driver, state, t_end, true)?;
    let mut t = state.t;
    loop {
        t += rng.sample::<f64, _>(Exp1) / bound.lambda_global;
        // commit whole steps the candidate lies beyond
        while t > step.t1 && state.t < t_end {
            std::mem::swap(&mut state.v, &mut step.v1);
            state.t = step.t1;
            if driver.grid.peek() == Some(state.t) {
                observer.snapshot(state)?;
                driver.grid.next += 1;
            }
            if state.t < t_end {
                step.begin(&mut driver, state, t_end, false)?;
            }
        }
        if t >= t_end {
            break;
        }
        stats.candidates += 1;
        let k = rng.random_range(0..n);
        let i = bound.pick_type(rng.random::<f64>());
        let v = step.voltage(&state.v, k, t);
        if let Some(to) = thin(model, &bound, state, k, i, v, t, rng)? {
            driver.integrate(state, t)?;
            apply(state, k, i, to, observer);
            stats.events += 1;
            observer.snapshot(state)?;
            step.begin(&mut driver, state, t_end, true)?;
        }
    }
    if state.t < t_end {
        driver.advance(state, t_end, observer)?;
    }
    stats.bound = Some(bound);
    Ok(stats)
}

/// Records a PET path from a copy of `state`, seeded by `seed`.
pub fn pet_simulate(
    lattice: &CircleLattice,
    model: &ChannelModel,
    state: &SystemState,
    t_end: f64,
    options: &SimOptions,
    seed: u64,
) -> Result<Trajectory> {
    let mut state = state.clone();
    let mut recorder = Recorder::new();
    let stats = pet_run(
        lattice,
        model,
        &mut state,
        t_end,
        options,
        &mut stream_rng(seed, 0),
        &mut recorder,
    )?;
    Ok(recorder.finish(stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::det::integrate_frozen;
    use crate::presets::{preset_model, PresetParams};

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn dense_output_tracks_the_integrator() {
        let lat = CircleLattice::from_spacing(1.0 / 8.0, 4.0, 1.0).unwrap();
        let (model, init) = preset_model("toy", &PresetParams::new(), &lat, None).unwrap();
        let state = crate::model::sample_initial_state(&lat, &init, 2).unwrap();
        let opts = SimOptions::default();
        let mut driver = Driver::new(&lat, &model, &state, 1.0, &opts).unwrap();
        let mut step = Step::new(lat.n());
        step.begin(&mut driver, &state, 1.0, true).unwrap();
        for frac in [0.1, 0.37, 0.5, 0.9] {
            let t = frac * step.t1;
            let exact = integrate_frozen(&state, &lat, &model, (0.0, t), 1e-6).unwrap();
            // a single direct step to t is itself off by up to ~5e-6 here
            for k in 0..lat.n() {
                let v = step.voltage(&state.v, k, t);
                assert!(
                    (v - exact[k]).abs() < 1e-5,
                    "k = {k}, t = {t}: {v} vs {}",
                    exact[k]
                );
            }
        }
    }
}
