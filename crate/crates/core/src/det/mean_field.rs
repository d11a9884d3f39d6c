//! Mean-field limit on the lattice: mean voltage `U` and occupancy fractions
//! `S` evolving by
//!
//! ```text
//! dU[k]/dt    = D Delta U[k] + sum_{i,j} S[k][i][j] g[i][j](U[k])
//! dS[k][i]/dt = A_i(U[k])^T S[k][i]
//! ```
//!
//! integrated with the same CN-Heun scheme as the frozen-occupancy stepper.

use crate::det::laplacian::{second_difference_into, CirculantSolver};
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{ChannelModel, InitialData};

/// Allowed drift of `S` rows off the probability simplex.
pub const SIMPLEX_DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub t: f64,
    pub u: Vec<f64>,
    /// `S[k][i][j]`, row-major `n x I x J`.
    pub s: Vec<f64>,
    pub types: usize,
    pub configs: usize,
}

impl MeanFieldState {
    pub fn initial(lattice: &CircleLattice, init: &InitialData) -> Result<Self> {
        let n = lattice.n();
        let (types, configs) = (init.types(), init.configs());
        let mut u = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n * types * configs);
        for k in 0..n {
            let x = lattice.position(k);
            u.push(init.v0.eval(x));
            for i in 0..types {
                s.extend(init.probabilities(i, x)?);
            }
        }
        Ok(Self {
            t: 0.0,
            u,
            s,
            types,
            configs,
        })
    }

    #[inline]
    pub fn occupancy(&self, k: usize, i: usize, j: usize) -> f64 {
        self.s[(k * self.types + i) * self.configs + j]
    }

    /// Largest `|sum_j S - 1|` or negative part over all rows.
    pub fn simplex_deviation(&self) -> f64 {
        self.s
            .chunks_exact(self.configs)
            .map(|row| {
                let sum_dev = (row.iter().sum::<f64>() - 1.0).abs();
                let neg = row.iter().fold(0.0f64, |m, &x| m.max(-x));
                sum_dev.max(neg)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldOptions {
    /// Store every `record_every`-th step (the final state is always stored).
    pub record_every: usize,
    /// Store `S` alongside `U`.
    pub keep_occupancy: bool,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            keep_occupancy: true,
        }
    }
}

/// Recorded mean-field solution.
#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    n: usize,
    types: usize,
    configs: usize,
    u: Vec<f64>,
    s: Option<Vec<f64>>,
}

impl MeanFieldTrajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn configs(&self) -> usize {
        self.configs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn voltage(&self, idx: usize) -> &[f64] {
        &self.u[idx * self.n..(idx + 1) * self.n]
    }

    pub fn occupancy(&self, idx: usize) -> Option<&[f64]> {
        let block = self.n * self.types * self.configs;
        self.s.as_ref().map(|s| &s[idx * block..(idx + 1) * block])
    }

    pub fn state(&self, idx: usize) -> MeanFieldState {
        MeanFieldState {
            t: self.times[idx],
            u: self.voltage(idx).to_vec(),
            s: self.occupancy(idx).map(<[f64]>::to_vec).unwrap_or_default(),
            types: self.types,
            configs: self.configs,
        }
    }

    pub fn last(&self) -> MeanFieldState {
        self.state(self.len() - 1)
    }

    /// Bracketing record indices and weight of the right one; clamps outside the range.
    pub fn locate(&self, t: f64) -> (usize, usize, f64) {
        let last = self.len() - 1;
        if t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[last] {
            return (last, last, 0.0);
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        (lo, hi, w)
    }

    /// Linear interpolation of `U` at time `t`.
    pub fn voltage_at(&self, t: f64, out: &mut [f64]) {
        let (lo, hi, w) = self.locate(t);
        let (a, b) = (self.voltage(lo), self.voltage(hi));
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = (1.0 - w) * x + w * y;
        }
    }

    /// Linear interpolation of `S` at time `t`, if it was recorded.
    pub fn occupancy_at(&self, t: f64, out: &mut [f64]) -> bool {
        let (lo, hi, w) = self.locate(t);
        match (self.occupancy(lo), self.occupancy(hi)) {
            (Some(a), Some(b)) => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = (1.0 - w) * x + w * y;
                }
                true
            }
            _ => false,
        }
    }
}

struct Workspace {
    solver: CirculantSolver,
    explicit: Vec<f64>,
    r0: Vec<f64>,
    r1: Vec<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
    rhs: Vec<f64>,
    u_pred: Vec<f64>,
    s_pred: Vec<f64>,
}

fn reaction(model: &ChannelModel, u: &[f64], s: &[f64], out: &mut [f64]) {
    let (types, configs) = (model.types(), model.configs());
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..types {
            for j in 0..configs {
                let g = model.drift_fn(i, j);
                if !g.is_zero() {
                    acc += s[(k * types + i) * configs + j] * g.eval(u[k]);
                }
            }
        }
        *o = acc;
    }
}

fn kolmogorov(model: &ChannelModel, u: &[f64], s: &[f64], out: &mut [f64]) {
    let (types, configs) = (model.types(), model.configs());
    out.fill(0.0);
    for (k, &uk) in u.iter().enumerate() {
        for i in 0..types {
            let base = (k * types + i) * configs;
            for a in 0..configs {
                let sa = s[base + a];
                for &b in model.targets(i, a) {
                    let flux = sa * model.rate(i, a, b, uk);
                    out[base + b] += flux;
                    out[base + a] -= flux;
                }
            }
        }
    }
}

fn step(
    lattice: &CircleLattice,
    model: &ChannelModel,
    ws: &mut Workspace,
    u: &mut [f64],
    s: &mut [f64],
    dt: f64,
) {
    let n = u.len();
    let c = 0.5 * dt * lattice.stiffness();
    second_difference_into(u, &mut ws.explicit);
    for (e, &uk) in ws.explicit.iter_mut().zip(u.iter()) {
        *e = uk + c * *e;
    }
    reaction(model, u, s, &mut ws.r0);
    kolmogorov(model, u, s, &mut ws.f0);

    for k in 0..n {
        ws.rhs[k] = ws.explicit[k] + dt * ws.r0[k];
    }
    ws.solver.solve(c, &ws.rhs, &mut ws.u_pred);
    for ((p, &x), &f) in ws.s_pred.iter_mut().zip(s.iter()).zip(&ws.f0) {
        *p = x + dt * f;
    }

    reaction(model, &ws.u_pred, &ws.s_pred, &mut ws.r1);
    kolmogorov(model, &ws.u_pred, &ws.s_pred, &mut ws.f1);
    for k in 0..n {
        ws.rhs[k] = ws.explicit[k] + 0.5 * dt * (ws.r0[k] + ws.r1[k]);
    }
    ws.solver.solve(c, &ws.rhs, u);
    for ((x, &a), &b) in s.iter_mut().zip(&ws.f0).zip(&ws.f1) {
        *x += 0.5 * dt * (a + b);
    }
}

/// Integrates the mean-field system on `[0, t_end]` with equal steps no
/// longer than `dt`, recording every step.
pub fn solve_mean_field(
    lattice: &CircleLattice,
    model: &ChannelModel,
    init: &InitialData,
    t_end: f64,
    dt: f64,
) -> Result<MeanFieldTrajectory> {
    solve_mean_field_with(lattice, model, init, t_end, dt, MeanFieldOptions::default())
}

pub fn solve_mean_field_with(
    lattice: &CircleLattice,
    model: &ChannelModel,
    init: &InitialData,
    t_end: f64,
    dt: f64,
    options: MeanFieldOptions,
) -> Result<MeanFieldTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::Parameter {
            name: "dt".into(),
            reason: format!("must be positive, got {dt}"),
        });
    }
    if !(t_end >= 0.0) {
        return Err(Error::Parameter {
            name: "T".into(),
            reason: format!("must be nonnegative, got {t_end}"),
        });
    }
    init.check_compatible(model)?;
    let start = MeanFieldState::initial(lattice, init)?;
    let n = lattice.n();
    let every = options.record_every.max(1);
    let steps = if t_end == 0.0 {
        0
    } else {
        (t_end / dt).ceil() as usize
    };
    let h = if steps == 0 {
        0.0
    } else {
        t_end / steps as f64
    };

    let mut traj = MeanFieldTrajectory {
        times: vec![0.0],
        n,
        types: start.types,
        configs: start.configs,
        u: start.u.clone(),
        s: options.keep_occupancy.then(|| start.s.clone()),
    };
    let mut ws = Workspace {
        solver: CirculantSolver::new(n),
        explicit: vec![0.0; n],
        r0: vec![0.0; n],
        r1: vec![0.0; n],
        f0: vec![0.0; start.s.len()],
        f1: vec![0.0; start.s.len()],
        rhs: vec![0.0; n],
        u_pred: vec![0.0; n],
        s_pred: vec![0.0; start.s.len()],
    };
    let mut state = start;
    for m in 1..=steps {
        step(lattice, model, &mut ws, &mut state.u, &mut state.s, h);
        state.t = if m == steps { t_end } else { m as f64 * h };
        if state.u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { t: state.t });
        }
        let deviation = state.simplex_deviation();
        if !(deviation <= SIMPLEX_DRIFT_TOL) {
            return Err(Error::SimplexDrift {
                t: state.t,
                deviation,
            });
        }
        if m % every == 0 || m == steps {
            traj.times.push(state.t);
            traj.u.extend_from_slice(&state.u);
            if let Some(s) = traj.s.as_mut() {
                s.extend_from_slice(&state.s);
            }
        }
    }
    Ok(traj)
}
