//! Channel models, system state and initial data.
//!
//! Indices are zero-based throughout: channel type `i < I`, configuration
//! `j < J`, compartment `k < n`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::det::laplacian::discrete_laplacian_into;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::lattice::CircleLattice;

/// Tolerance on `sum_j z0[i][j](x) = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone)]
enum FnKind {
    Zero,
    Const(f64),
    Expr(Arc<Expr>),
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>, Arc<str>),
}

/// A real function of one real variable (voltage or position).
///
/// Identically-zero functions are tagged so solvers can skip them.
#[derive(Clone)]
pub struct ScalarFn(FnKind);

impl ScalarFn {
    pub fn zero() -> Self {
        ScalarFn(FnKind::Zero)
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            Self::zero()
        } else {
            ScalarFn(FnKind::Const(c))
        }
    }

    pub fn new<F>(label: &str, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ScalarFn(FnKind::Closure(Arc::new(f), Arc::from(label)))
    }

    pub fn from_expr(expr: Expr) -> Self {
        match expr.as_constant() {
            Some(c) => Self::constant(c),
            None => ScalarFn(FnKind::Expr(Arc::new(expr))),
        }
    }

    /// Parses `source` as a function of `variable`.
    pub fn parse(source: &str, variable: &str) -> Result<Self> {
        Expr::parse(source, variable).map(Self::from_expr)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.0 {
            FnKind::Zero => 0.0,
            FnKind::Const(c) => *c,
            FnKind::Expr(e) => e.eval(x),
            FnKind::Closure(f, _) => f(x),
        }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        matches!(self.0, FnKind::Zero)
    }

    pub fn label(&self) -> String {
        match &self.0 {
            FnKind::Zero => "0".into(),
            FnKind::Const(c) => format!("{c}"),
            FnKind::Expr(e) => e.source().to_string(),
            FnKind::Closure(_, label) => label.to_string(),
        }
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label())
    }
}

/// `I` channel types with `J` configurations each: per-configuration drift
/// `g[i][j](v)` and off-diagonal transition rates `A[i][(a, b)](v)`.
#[derive(Clone)]
pub struct ChannelModel {
    name: String,
    types: usize,
    configs: usize,
    drift: Vec<ScalarFn>,
    rates: Vec<ScalarFn>,
    /// Nonzero destinations per (i, a).
    targets: Vec<Vec<usize>>,
    v_range: (f64, f64),
}

impl fmt::Debug for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelModel")
            .field("name", &self.name)
            .field("types", &self.types)
            .field("configs", &self.configs)
            .field("v_range", &self.v_range)
            .finish_non_exhaustive()
    }
}

pub struct ChannelModelBuilder {
    name: String,
    types: usize,
    configs: usize,
    drift: Vec<ScalarFn>,
    rates: Vec<ScalarFn>,
    v_range: (f64, f64),
}

impl ChannelModelBuilder {
    pub fn drift(mut self, i: usize, j: usize, g: ScalarFn) -> Self {
        assert!(
            i < self.types && j < self.configs,
            "drift index ({i},{j}) out of range"
        );
        self.drift[i * self.configs + j] = g;
        self
    }

    /// Rate of the jump `a -> b` for type `i`; `a != b`.
    pub fn rate(mut self, i: usize, a: usize, b: usize, rate: ScalarFn) -> Self {
        assert!(
            i < self.types && a < self.configs && b < self.configs,
            "rate index ({i},{a},{b}) out of range"
        );
        assert_ne!(a, b, "diagonal rates are derived from the row sums");
        self.rates[(i * self.configs + a) * self.configs + b] = rate;
        self
    }

    /// Voltage interval over which rate bounds are computed.
    pub fn voltage_range(mut self, lo: f64, hi: f64) -> Self {
        self.v_range = (lo, hi);
        self
    }

    pub fn build(self) -> Result<ChannelModel> {
        let (lo, hi) = self.v_range;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Model(format!("bad voltage range [{lo}, {hi}]")));
        }
        let j = self.configs;
        let mut targets = Vec::with_capacity(self.types * j);
        for i in 0..self.types {
            for a in 0..j {
                let row: Vec<usize> = (0..j)
                    .filter(|&b| b != a && !self.rates[(i * j + a) * j + b].is_zero())
                    .collect();
                targets.push(row);
            }
        }
        Ok(ChannelModel {
            name: self.name,
            types: self.types,
            configs: self.configs,
            drift: self.drift,
            rates: self.rates,
            targets,
            v_range: self.v_range,
        })
    }
}

impl ChannelModel {
    pub fn builder(name: &str, types: usize, configs: usize) -> ChannelModelBuilder {
        assert!(
            types > 0 && configs > 0,
            "model needs at least one type and configuration"
        );
        ChannelModelBuilder {
            name: name.to_string(),
            types,
            configs,
            drift: vec![ScalarFn::zero(); types * configs],
            rates: vec![ScalarFn::zero(); types * configs * configs],
            v_range: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `I`.
    #[inline]
    pub fn types(&self) -> usize {
        self.types
    }

    /// `J`.
    #[inline]
    pub fn configs(&self) -> usize {
        self.configs
    }

    #[inline]
    pub fn voltage_range(&self) -> (f64, f64) {
        self.v_range
    }

    #[inline]
    pub fn drift_fn(&self, i: usize, j: usize) -> &ScalarFn {
        &self.drift[i * self.configs + j]
    }

    #[inline]
    pub fn rate_fn(&self, i: usize, a: usize, b: usize) -> &ScalarFn {
        &self.rates[(i * self.configs + a) * self.configs + b]
    }

    /// Destinations `b` with a rate function that is not identically zero.
    #[inline]
    pub fn targets(&self, i: usize, a: usize) -> &[usize] {
        &self.targets[i * self.configs + a]
    }

    /// Whether type `i` has any nonzero rate.
    pub fn is_stochastic(&self, i: usize) -> bool {
        (0..self.configs).any(|a| !self.targets(i, a).is_empty())
    }

    #[inline]
    pub fn rate(&self, i: usize, a: usize, b: usize, v: f64) -> f64 {
        self.rate_fn(i, a, b).eval(v)
    }

    /// Total exit rate `-A[i][(a,a)](v)` of configuration `a`.
    #[inline]
    pub fn exit_rate(&self, i: usize, a: usize, v: f64) -> f64 {
        self.targets(i, a)
            .iter()
            .map(|&b| self.rate(i, a, b, v))
            .sum()
    }

    /// Reaction term `sum_i g[i][config_i](v)` for one compartment.
    #[inline]
    pub fn reaction(&self, occupied: &[usize], v: f64) -> f64 {
        occupied
            .iter()
            .enumerate()
            .map(|(i, &j)| self.drift_fn(i, j).eval(v))
            .sum()
    }

    /// Realized `J x J` rate matrix of type `i` at voltage `v`, row-major.
    /// The diagonal is the negative off-diagonal row sum.
    pub fn transition_rates(&self, v: f64, i: usize) -> Result<Vec<f64>> {
        if i >= self.types {
            return Err(Error::Model(format!(
                "channel type {i} out of range (model has {})",
                self.types
            )));
        }
        let j = self.configs;
        let mut m = vec![0.0; j * j];
        for a in 0..j {
            let mut row = 0.0;
            for b in 0..j {
                if a == b {
                    continue;
                }
                let r = self.rate(i, a, b, v);
                if !(r >= 0.0) {
                    return Err(Error::NegativeRate {
                        channel: i,
                        from: a,
                        to: b,
                        v,
                        value: r,
                    });
                }
                m[a * j + b] = r;
                row += r;
            }
            m[a * j + a] = -row;
        }
        Ok(m)
    }

    /// Copy of this model with every drift replaced by zero (voltage clamp).
    pub fn without_drift(&self) -> ChannelModel {
        let mut out = self.clone();
        for g in &mut out.drift {
            *g = ScalarFn::zero();
        }
        out.name = format!("{}-clamped", self.name);
        out
    }

    /// Copy of this model with a different operating range.
    pub fn with_voltage_range(&self, lo: f64, hi: f64) -> ChannelModel {
        let mut out = self.clone();
        out.v_range = (lo, hi);
        out
    }
}

/// Voltage per compartment plus the occupied configuration of every
/// `(compartment, type)` pair.
///
/// Storing the occupied index makes the one-hot invariant structural: the
/// tensor view `Z[k][i][j]` is `1` exactly when `j == config(k, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub v: Vec<f64>,
    types: usize,
    configs: usize,
    occupied: Vec<usize>,
}

impl SystemState {
    pub fn new(
        t: f64,
        v: Vec<f64>,
        types: usize,
        configs: usize,
        occupied: Vec<usize>,
    ) -> Result<Self> {
        if occupied.len() != v.len() * types {
            return Err(Error::Dimension(format!(
                "occupancy has {} entries, expected {} x {}",
                occupied.len(),
                v.len(),
                types
            )));
        }
        if let Some(&bad) = occupied.iter().find(|&&j| j >= configs) {
            return Err(Error::Dimension(format!(
                "configuration {bad} >= J = {configs}"
            )));
        }
        Ok(Self {
            t,
            v,
            types,
            configs,
            occupied,
        })
    }

    /// Every compartment in configuration `config` for every type.
    pub fn uniform(
        t: f64,
        v: Vec<f64>,
        types: usize,
        configs: usize,
        config: usize,
    ) -> Result<Self> {
        let n = v.len();
        Self::new(t, v, types, configs, vec![config; n * types])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn types(&self) -> usize {
        self.types
    }

    #[inline]
    pub fn configs(&self) -> usize {
        self.configs
    }

    #[inline]
    pub fn config(&self, k: usize, i: usize) -> usize {
        self.occupied[k * self.types + i]
    }

    #[inline]
    pub fn set_config(&mut self, k: usize, i: usize, j: usize) {
        debug_assert!(j < self.configs);
        self.occupied[k * self.types + i] = j;
    }

    /// Occupied configurations of all types at compartment `k`.
    #[inline]
    pub fn site(&self, k: usize) -> &[usize] {
        &self.occupied[k * self.types..(k + 1) * self.types]
    }

    pub fn occupancy(&self) -> &[usize] {
        &self.occupied
    }

    /// `Z[k][i][j]` as 0/1.
    #[inline]
    pub fn z(&self, k: usize, i: usize, j: usize) -> f64 {
        if self.config(k, i) == j {
            1.0
        } else {
            0.0
        }
    }

    /// Dense one-hot tensor, `n x I x J` row-major.
    pub fn occupancy_tensor(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n() * self.types * self.configs];
        for (ki, &j) in self.occupied.iter().enumerate() {
            out[ki * self.configs + j] = 1.0;
        }
        out
    }

    /// Checks `sum_j Z[k][i][j] = 1` on the dense view.
    pub fn is_one_hot(&self) -> bool {
        let dense = self.occupancy_tensor();
        dense
            .chunks_exact(self.configs)
            .all(|row| row.iter().sum::<f64>() == 1.0 && row.iter().all(|&z| z == 0.0 || z == 1.0))
    }
}

/// Draws all configurations of one compartment at position `x`.
pub type JointSampler = Arc<dyn Fn(f64, &mut dyn RngCore) -> Vec<usize> + Send + Sync>;

/// Initial voltage profile and per-type configuration probabilities.
#[derive(Clone)]
pub struct InitialData {
    pub v0: ScalarFn,
    /// `z0[i * J + j](x)`.
    z0: Vec<ScalarFn>,
    types: usize,
    configs: usize,
    joint: Option<JointSampler>,
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialData")
            .field("v0", &self.v0)
            .field("types", &self.types)
            .field("configs", &self.configs)
            .field("joint", &self.joint.is_some())
            .finish_non_exhaustive()
    }
}

impl InitialData {
    /// `z0` is indexed `[i][j]`.
    pub fn new(v0: ScalarFn, z0: Vec<Vec<ScalarFn>>) -> Result<Self> {
        let types = z0.len();
        let configs = z0.first().map_or(0, Vec::len);
        if types == 0 || configs == 0 || z0.iter().any(|row| row.len() != configs) {
            return Err(Error::Dimension(
                "z0 must be a non-empty I x J table".into(),
            ));
        }
        Ok(Self {
            v0,
            z0: z0.into_iter().flatten().collect(),
            types,
            configs,
            joint: None,
        })
    }

    /// Installs a coupled per-compartment sampler; `z0` must then hold its marginals.
    pub fn with_joint_sampler(mut self, sampler: JointSampler) -> Self {
        self.joint = Some(sampler);
        self
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn configs(&self) -> usize {
        self.configs
    }

    #[inline]
    pub fn z0(&self, i: usize, j: usize) -> &ScalarFn {
        &self.z0[i * self.configs + j]
    }

    /// Category probabilities of type `i` at `x`, validated against the simplex.
    pub fn probabilities(&self, i: usize, x: f64) -> Result<Vec<f64>> {
        let p: Vec<f64> = (0..self.configs).map(|j| self.z0(i, j).eval(x)).collect();
        let sum: f64 = p.iter().sum();
        let in_range = p
            .iter()
            .all(|&q| (-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&q));
        if !in_range || (sum - 1.0).abs() > SIMPLEX_TOL || !sum.is_finite() {
            return Err(Error::Simplex { x, channel: i, sum });
        }
        Ok(p)
    }

    pub fn check_compatible(&self, model: &ChannelModel) -> Result<()> {
        if self.types != model.types() || self.configs != model.configs() {
            return Err(Error::Dimension(format!(
                "initial data is {} x {}, model is {} x {}",
                self.types,
                self.configs,
                model.types(),
                model.configs()
            )));
        }
        Ok(())
    }
}

/// Builds the initial state: `V[k] = v0(hk)` and an independent categorical
/// draw per `(k, i)` from `z0[i][.](hk)` (or the registered joint sampler).
pub fn sample_initial_state(
    lattice: &CircleLattice,
    init: &InitialData,
    seed: u64,
) -> Result<SystemState> {
    sample_initial_state_with(lattice, init, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// [`sample_initial_state`] drawing from a caller-supplied generator.
pub fn sample_initial_state_with<R: RngCore>(
    lattice: &CircleLattice,
    init: &InitialData,
    rng: &mut R,
) -> Result<SystemState> {
    let n = lattice.n();
    let mut v = Vec::with_capacity(n);
    let mut occupied = Vec::with_capacity(n * init.types);
    for k in 0..n {
        let x = lattice.position(k);
        v.push(init.v0.eval(x));
        // validate marginals even when a joint sampler is installed
        let probs: Vec<Vec<f64>> = (0..init.types)
            .map(|i| init.probabilities(i, x))
            .collect::<Result<_>>()?;
        match &init.joint {
            Some(sampler) => {
                let draw = sampler(x, rng);
                if draw.len() != init.types || draw.iter().any(|&j| j >= init.configs) {
                    return Err(Error::Dimension(
                        "joint sampler returned a malformed draw".into(),
                    ));
                }
                occupied.extend(draw);
            }
            None => {
                for p in &probs {
                    occupied.push(categorical(p, rng));
                }
            }
        }
    }
    SystemState::new(0.0, v, init.types, init.configs, occupied)
}

/// Index `j` with probability `p[j]`; zero-probability categories are never chosen.
pub(crate) fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>();
    let total: f64 = p.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &q) in p.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        acc += q;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

/// Right-hand side of the voltage equation:
/// `D (V[k+1] - 2V[k] + V[k-1]) / h^2 + sum_i g[i][config](V[k])`.
pub fn drift_rhs(lattice: &CircleLattice, model: &ChannelModel, state: &SystemState) -> Vec<f64> {
    let mut out = vec![0.0; state.n()];
    drift_rhs_into(lattice, model, state.site_view(), &state.v, &mut out);
    out
}

/// Occupancy accessor used by the integrators.
pub(crate) struct SiteView<'a> {
    occupied: &'a [usize],
    types: usize,
}

impl SiteView<'_> {
    #[inline]
    pub(crate) fn site(&self, k: usize) -> &[usize] {
        &self.occupied[k * self.types..(k + 1) * self.types]
    }
}

impl SystemState {
    pub(crate) fn site_view(&self) -> SiteView<'_> {
        SiteView {
            occupied: &self.occupied,
            types: self.types,
        }
    }

    /// Mutable voltage alongside a read-only occupancy view.
    pub(crate) fn split_mut(&mut self) -> (&mut [f64], SiteView<'_>) {
        (
            &mut self.v,
            SiteView {
                occupied: &self.occupied,
                types: self.types,
            },
        )
    }
}

pub(crate) fn reaction_into(
    model: &ChannelModel,
    sites: &SiteView<'_>,
    v: &[f64],
    out: &mut [f64],
) {
    for (k, (o, &vk)) in out.iter_mut().zip(v).enumerate() {
        *o = model.reaction(sites.site(k), vk);
    }
}

pub(crate) fn drift_rhs_into(
    lattice: &CircleLattice,
    model: &ChannelModel,
    sites: SiteView<'_>,
    v: &[f64],
    out: &mut [f64],
) {
    discrete_laplacian_into(v, lattice, out);
    for (k, (o, &vk)) in out.iter_mut().zip(v).enumerate() {
        *o += model.reaction(sites.site(k), vk);
    }
}
