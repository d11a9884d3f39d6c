//! Voltage integration with the channel occupancy held fixed.
//!
//! Each substep is Crank-Nicolson in the diffusion and Heun (explicit
//! trapezoid) in the reaction term:
//!
//! ```text
//! (I - dt/2 L) V*   = (I + dt/2 L) V + dt R(V)
//! (I - dt/2 L) V^+  = (I + dt/2 L) V + dt/2 (R(V) + R(V*))
//! ```
//!
//! Second order overall and A-stable in the stiff `D/h^2` part.

use crate::det::laplacian::{second_difference_into, CirculantSolver};
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{reaction_into, ChannelModel, SiteView, SystemState};

/// Reusable work buffers for [`integrate_frozen`].
#[derive(Debug, Clone, Default)]
pub struct FrozenIntegrator {
    solver: CirculantSolver,
    explicit: Vec<f64>,
    r0: Vec<f64>,
    r1: Vec<f64>,
    rhs: Vec<f64>,
    predictor: Vec<f64>,
}

impl FrozenIntegrator {
    pub fn new(n: usize) -> Self {
        Self {
            solver: CirculantSolver::new(n),
            explicit: vec![0.0; n],
            r0: vec![0.0; n],
            r1: vec![0.0; n],
            rhs: vec![0.0; n],
            predictor: vec![0.0; n],
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.r0.len() != n {
            *self = Self::new(n);
        }
    }

    /// Advances `v` from `t0` to `t1` in equal substeps no longer than `dt_max`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn advance(
        &mut self,
        lattice: &CircleLattice,
        model: &ChannelModel,
        sites: &SiteView<'_>,
        v: &mut [f64],
        t0: f64,
        t1: f64,
        dt_max: f64,
    ) -> Result<()> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        // tolerate rounding so that e.g. 0.1 / 0.01 is 10 steps, not 11
        let steps = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for s in 0..steps {
            self.step(lattice, model, sites, v, dt);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    t: t0 + (s + 1) as f64 * dt,
                });
            }
        }
        Ok(())
    }

    /// One CN-Heun step of length `dt`.
    pub(crate) fn step(
        &mut self,
        lattice: &CircleLattice,
        model: &ChannelModel,
        sites: &SiteView<'_>,
        v: &mut [f64],
        dt: f64,
    ) {
        let n = v.len();
        self.ensure(n);
        let c = 0.5 * dt * lattice.stiffness();

        second_difference_into(v, &mut self.explicit);
        for (e, &vk) in self.explicit.iter_mut().zip(v.iter()) {
            *e = vk + c * *e;
        }
        reaction_into(model, sites, v, &mut self.r0);

        for k in 0..n {
            self.rhs[k] = self.explicit[k] + dt * self.r0[k];
        }
        self.solver.solve(c, &self.rhs, &mut self.predictor);

        reaction_into(model, sites, &self.predictor, &mut self.r1);
        for k in 0..n {
            self.rhs[k] = self.explicit[k] + 0.5 * dt * (self.r0[k] + self.r1[k]);
        }
        self.solver.solve(c, &self.rhs, v);
    }
}

/// Integrates the voltage of `state` over `span = (t0, t1)` with its
/// occupancy frozen, using substeps of length at most `dt_max`.
pub fn integrate_frozen(
    state: &SystemState,
    lattice: &CircleLattice,
    model: &ChannelModel,
    span: (f64, f64),
    dt_max: f64,
) -> Result<Vec<f64>> {
    if !(dt_max > 0.0) {
        return Err(Error::Parameter {
            name: "dt_max".into(),
            reason: format!("must be positive, got {dt_max}"),
        });
    }
    if state.n() != lattice.n() {
        return Err(Error::Dimension(format!(
            "state has {} compartments, lattice {}",
            state.n(),
            lattice.n()
        )));
    }
    let mut v = state.v.clone();
    let mut integrator = FrozenIntegrator::new(v.len());
    integrator.advance(
        lattice,
        model,
        &state.site_view(),
        &mut v,
        span.0,
        span.1,
        dt_max,
    )?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarFn;

    fn toy_drift() -> ChannelModel {
        // one open channel and a leak: dV/dt = (1 - V) - V / 10
        ChannelModel::builder("scalar", 2, 1)
            .drift(0, 0, ScalarFn::new("1 - v", |v| 1.0 - v))
            .drift(1, 0, ScalarFn::new("-v/10", |v| -v / 10.0))
            .build()
            .unwrap()
    }

    fn scalar_error(dt: f64) -> f64 {
        let lat = CircleLattice::new(1, 1.0, 0.0).unwrap();
        let state = SystemState::uniform(0.0, vec![0.0], 2, 1, 0).unwrap();
        let v = integrate_frozen(&state, &lat, &toy_drift(), (0.0, 1.0), dt).unwrap();
        let exact = 10.0 / 11.0 * (1.0 - (-1.1f64).exp());
        (v[0] - exact).abs()
    }

    #[test]
    fn scalar_ode_is_second_order() {
        let e1 = scalar_error(0.1);
        let e2 = scalar_error(0.05);
        let e3 = scalar_error(0.025);
        assert!(e1 < 0.01 * 0.1 * 0.1 * 10.0);
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn pure_diffusion_conserves_mass() {
        let lat = CircleLattice::new(4, 4.0, 1.0).unwrap();
        let model = ChannelModel::builder("none", 1, 1).build().unwrap();
        let state = SystemState::uniform(0.0, vec![0.0, 1.0, 0.0, -1.0], 1, 1, 0).unwrap();
        let v = integrate_frozen(&state, &lat, &model, (0.0, 1.0), 0.01).unwrap();
        assert!(v.iter().sum::<f64>().abs() < 1e-12);
        // and smooths toward the mean
        assert!(v.iter().all(|x| x.abs() < 0.2));
    }

    #[test]
    fn zero_span_is_identity() {
        let lat = CircleLattice::new(5, 1.0, 1.0).unwrap();
        let state = SystemState::uniform(0.0, vec![0.1, 0.5, -0.2, 0.0, 3.0], 2, 1, 0).unwrap();
        let v = integrate_frozen(&state, &lat, &toy_drift(), (0.3, 0.3), 0.01).unwrap();
        assert_eq!(v, state.v);
    }

    #[test]
    fn splitting_the_span_changes_little() {
        let lat = CircleLattice::new(16, 2.0, 1.0).unwrap();
        let v0: Vec<f64> = (0..16).map(|k| (k as f64 * 0.4).sin()).collect();
        let state = SystemState::uniform(0.0, v0, 2, 1, 0).unwrap();
        let model = toy_drift();
        let whole = integrate_frozen(&state, &lat, &model, (0.0, 0.5), 0.01).unwrap();
        let mut half = state.clone();
        half.v = integrate_frozen(&state, &lat, &model, (0.0, 0.25), 0.01).unwrap();
        let split = integrate_frozen(&half, &lat, &model, (0.25, 0.5), 0.01).unwrap();
        for (a, b) in whole.iter().zip(&split) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let lat = CircleLattice::new(3, 1.0, 0.0).unwrap();
        let model = ChannelModel::builder("explode", 1, 1)
            .drift(0, 0, ScalarFn::new("v^3", |v| v * v * v))
            .build()
            .unwrap();
        let state = SystemState::uniform(0.0, vec![10.0; 3], 1, 1, 0).unwrap();
        assert!(matches!(
            integrate_frozen(&state, &lat, &model, (0.0, 10.0), 0.5),
            Err(Error::NonFinite { .. })
        ));
    }
}
