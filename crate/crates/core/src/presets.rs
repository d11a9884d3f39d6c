//! Ready-made channel models.
//!
//! | id                 | I | J  | contents                                          |
//! |--------------------|---|----|---------------------------------------------------|
//! | `toy`              | 2 | 2  | one gate with drift `f`, plus a leak `-g`         |
//! | `two-gate-product` | 1 | 4  | product of two independent binary gates           |
//! | `hodgkin-huxley`   | 3 | 16 | Na and K on the 4-cube, plus leak                 |
//! | `exclusive`        | 2 | 4  | either an `f` channel or a `g` channel per site   |
//! | `macro-density`    | 1 | 4  | gate that is present with probability `p(x)`      |
//!
//! Configuration 0 of the toy gate is *open*. Every parameter is optional;
//! defaults are listed by [`preset_parameters`].

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{categorical, ChannelModel, InitialData, ScalarFn};

pub const PRESETS: &[&str] = &[
    "toy",
    "two-gate-product",
    "hodgkin-huxley",
    "exclusive",
    "macro-density",
];

/// What a preset parameter is a function of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Function of the voltage `v`.
    Voltage,
    /// Function of the position `x` on the circle.
    Position,
    /// Plain number.
    Constant,
}

impl ParamKind {
    pub fn variable(self) -> &'static str {
        match self {
            ParamKind::Voltage => "v",
            ParamKind::Position => "x",
            ParamKind::Constant => "",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
}

const fn spec(name: &'static str, kind: ParamKind, default: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        default,
    }
}

use ParamKind::{Constant, Position, Voltage};

const TOY: &[ParamSpec] = &[
    spec("alpha", Voltage, "exp(10*(v-0.5))"),
    spec("beta", Voltage, "exp(-10*(v-0.5))"),
    spec("f", Voltage, "1-v"),
    spec("g", Voltage, "v/10"),
    spec("v0", Position, "exp(-(x-(L-h)/2)^2)"),
    spec("z0", Position, "alpha(v0)/(alpha(v0)+beta(v0))"),
];

const TWO_GATE: &[ParamSpec] = &[
    spec("alpha", Voltage, "exp(10*(v-0.5))"),
    spec("beta", Voltage, "exp(-10*(v-0.5))"),
    spec("alpha_t", Voltage, "exp(10*(v-0.5))"),
    spec("beta_t", Voltage, "exp(-10*(v-0.5))"),
    spec("f", Voltage, "0"),
    spec("z", Position, "0.5"),
    spec("z_t", Position, "0.5"),
    spec("v0", Position, "0"),
];

const HH: &[ParamSpec] = &[
    spec("alpha_m", Voltage, "0.1(v+40)/(1-exp(-(v+40)/10))"),
    spec("beta_m", Voltage, "4exp(-(v+65)/18)"),
    spec("alpha_h", Voltage, "0.07exp(-(v+65)/20)"),
    spec("beta_h", Voltage, "1/(1+exp(-(v+35)/10))"),
    spec("alpha_n", Voltage, "0.01(v+55)/(1-exp(-(v+55)/10))"),
    spec("beta_n", Voltage, "0.125exp(-(v+65)/80)"),
    spec("g_na", Constant, "120"),
    spec("e_na", Constant, "50"),
    spec("g_k", Constant, "36"),
    spec("e_k", Constant, "-77"),
    spec("g_l", Constant, "0.3"),
    spec("e_l", Constant, "-54.387"),
    spec("v0", Position, "-65"),
    spec("z_m", Position, "alpha_m/(alpha_m+beta_m) at v0"),
    spec("z_h", Position, "alpha_h/(alpha_h+beta_h) at v0"),
    spec("z_n", Position, "alpha_n/(alpha_n+beta_n) at v0"),
];

const EXCLUSIVE: &[ParamSpec] = &[
    spec("alpha", Voltage, "exp(10*(v-0.5))"),
    spec("beta", Voltage, "exp(-10*(v-0.5))"),
    spec("alpha2", Voltage, "alpha"),
    spec("beta2", Voltage, "beta"),
    spec("f", Voltage, "1-v"),
    spec("g", Voltage, "v/10"),
    spec("p", Position, "0.5"),
    spec("v0", Position, "exp(-(x-(L-h)/2)^2)"),
];

const MACRO_DENSITY: &[ParamSpec] = &[
    spec("alpha", Voltage, "exp(10*(v-0.5))"),
    spec("beta", Voltage, "exp(-10*(v-0.5))"),
    spec("f", Voltage, "1-v"),
    spec("p", Position, "0.5"),
    spec("q", Position, "alpha(v0)/(alpha(v0)+beta(v0))"),
    spec("v0", Position, "exp(-(x-(L-h)/2)^2)"),
];

/// Parameters accepted by preset `name`.
pub fn preset_parameters(name: &str) -> Result<&'static [ParamSpec]> {
    match name {
        "toy" => Ok(TOY),
        "two-gate-product" => Ok(TWO_GATE),
        "hodgkin-huxley" => Ok(HH),
        "exclusive" => Ok(EXCLUSIVE),
        "macro-density" => Ok(MACRO_DENSITY),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Default operating voltage range of preset `name`.
pub fn default_voltage_range(name: &str) -> Result<(f64, f64)> {
    preset_parameters(name)?;
    Ok(if name == "hodgkin-huxley" {
        (-100.0, 60.0)
    } else {
        (0.0, 1.0)
    })
}

/// Named overrides for a preset's functions and constants.
#[derive(Debug, Clone, Default)]
pub struct PresetParams {
    values: BTreeMap<String, ScalarFn>,
}

impl PresetParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, f: ScalarFn) -> Self {
        self.values.insert(name.to_string(), f);
        self
    }

    pub fn insert(&mut self, name: &str, f: ScalarFn) {
        self.values.insert(name.to_string(), f);
    }

    pub fn get(&self, name: &str) -> Option<&ScalarFn> {
        self.values.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    fn or(&self, name: &str, default: impl FnOnce() -> ScalarFn) -> ScalarFn {
        self.values.get(name).cloned().unwrap_or_else(default)
    }

    fn constant(&self, name: &str, default: f64) -> f64 {
        self.values.get(name).map_or(default, |f| f.eval(0.0))
    }
}

/// Builds preset `name` on `lattice`, with operating range `range` (or the
/// preset default).
pub fn preset_model(
    name: &str,
    params: &PresetParams,
    lattice: &CircleLattice,
    range: Option<(f64, f64)>,
) -> Result<(ChannelModel, InitialData)> {
    let specs = preset_parameters(name)?;
    if let Some(unknown) = params.names().find(|p| !specs.iter().any(|s| s.name == *p)) {
        return Err(Error::Parameter {
            name: unknown.to_string(),
            reason: format!("not a parameter of preset `{name}`"),
        });
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => default_voltage_range(name)?,
    };
    let (builder, init, fields) = match name {
        "toy" => toy(params, lattice),
        "two-gate-product" => two_gate_product(params),
        "hodgkin-huxley" => hodgkin_huxley(params)?,
        "exclusive" => exclusive(params, lattice),
        "macro-density" => macro_density(params, lattice),
        _ => unreachable!("checked by preset_parameters"),
    };
    for (field, f) in &fields {
        check_probability_field(field, f, lattice)?;
    }
    let model = builder.voltage_range(lo, hi).build()?;
    init.check_compatible(&model)?;
    Ok((model, init))
}

fn check_probability_field(name: &str, f: &ScalarFn, lattice: &CircleLattice) -> Result<()> {
    for k in 0..lattice.n() {
        let x = lattice.position(k);
        let p = f.eval(x);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter {
                name: name.to_string(),
                reason: format!("probability field is {p} at x = {x}, outside [0, 1]"),
            });
        }
    }
    Ok(())
}

type Built = (
    crate::model::ChannelModelBuilder,
    InitialData,
    Vec<(&'static str, ScalarFn)>,
);

fn exp_up() -> ScalarFn {
    ScalarFn::new("exp(10*(v-0.5))", |v| (10.0 * (v - 0.5)).exp())
}

fn exp_down() -> ScalarFn {
    ScalarFn::new("exp(-10*(v-0.5))", |v| (-10.0 * (v - 0.5)).exp())
}

/// Gaussian bump centred between the two middle compartments.
fn bump(lattice: &CircleLattice) -> ScalarFn {
    let c = 0.5 * (lattice.length() - lattice.h());
    ScalarFn::new("exp(-(x-(L-h)/2)^2)", move |x| (-(x - c) * (x - c)).exp())
}

/// `alpha(v0(x)) / (alpha(v0(x)) + beta(v0(x)))`, or `1/2` where both
/// rates vanish.
fn steady_open(alpha: &ScalarFn, beta: &ScalarFn, v0: &ScalarFn) -> ScalarFn {
    let (a, b, v) = (alpha.clone(), beta.clone(), v0.clone());
    ScalarFn::new("alpha(v0)/(alpha(v0)+beta(v0))", move |x| {
        let vx = v.eval(x);
        let (ra, rb) = (a.eval(vx), b.eval(vx));
        if ra + rb > 0.0 {
            ra / (ra + rb)
        } else {
            0.5
        }
    })
}

fn complement(f: &ScalarFn) -> ScalarFn {
    let f = f.clone();
    ScalarFn::new(&format!("1-({})", f.label()), move |x| 1.0 - f.eval(x))
}

fn negated(f: &ScalarFn) -> ScalarFn {
    if f.is_zero() {
        return ScalarFn::zero();
    }
    let f = f.clone();
    ScalarFn::new(&format!("-({})", f.label()), move |v| -f.eval(v))
}

fn product(label: &str, fs: Vec<ScalarFn>) -> ScalarFn {
    ScalarFn::new(label, move |x| fs.iter().map(|f| f.eval(x)).product())
}

fn toy(params: &PresetParams, lattice: &CircleLattice) -> Built {
    let alpha = params.or("alpha", exp_up);
    let beta = params.or("beta", exp_down);
    let f = params.or("f", || ScalarFn::new("1-v", |v| 1.0 - v));
    let g = params.or("g", || ScalarFn::new("v/10", |v| v / 10.0));
    let v0 = params.or("v0", || bump(lattice));
    let z0 = params.or("z0", || steady_open(&alpha, &beta, &v0));

    let builder = ChannelModel::builder("toy", 2, 2)
        .drift(0, 0, f)
        .drift(1, 0, negated(&g))
        .rate(0, 0, 1, beta)
        .rate(0, 1, 0, alpha);
    let init = InitialData::new(
        v0,
        vec![
            vec![z0.clone(), complement(&z0)],
            vec![ScalarFn::constant(1.0), ScalarFn::zero()],
        ],
    )
    .expect("static shape");
    (builder, init, vec![("z0", z0)])
}

/// Rates of the two-gate chain on configurations
/// `[(0,0), (1,0), (0,1), (1,1)]` of `(xi, xi_tilde)`.
fn two_gate_rates(
    builder: crate::model::ChannelModelBuilder,
    i: usize,
    alpha: &ScalarFn,
    beta: &ScalarFn,
    alpha_t: &ScalarFn,
    beta_t: &ScalarFn,
) -> crate::model::ChannelModelBuilder {
    builder
        .rate(i, 0, 1, alpha.clone())
        .rate(i, 0, 2, alpha_t.clone())
        .rate(i, 1, 0, beta.clone())
        .rate(i, 1, 3, alpha_t.clone())
        .rate(i, 2, 0, beta_t.clone())
        .rate(i, 2, 3, alpha.clone())
        .rate(i, 3, 1, beta_t.clone())
        .rate(i, 3, 2, beta.clone())
}

/// Product law of `(xi, xi_tilde) ~ Ber(z) x Ber(z_t)` in configuration order.
fn product_law(z: &ScalarFn, z_t: &ScalarFn) -> Vec<ScalarFn> {
    let (nz, nzt) = (complement(z), complement(z_t));
    vec![
        product("(1-z)(1-z_t)", vec![nz.clone(), nzt.clone()]),
        product("z(1-z_t)", vec![z.clone(), nzt]),
        product("(1-z)z_t", vec![nz, z_t.clone()]),
        product("z z_t", vec![z.clone(), z_t.clone()]),
    ]
}

fn two_gate_product(params: &PresetParams) -> Built {
    let alpha = params.or("alpha", exp_up);
    let beta = params.or("beta", exp_down);
    let alpha_t = params.or("alpha_t", exp_up);
    let beta_t = params.or("beta_t", exp_down);
    let f = params.or("f", ScalarFn::zero);
    let z = params.or("z", || ScalarFn::constant(0.5));
    let z_t = params.or("z_t", || ScalarFn::constant(0.5));
    let v0 = params.or("v0", ScalarFn::zero);

    let builder = two_gate_rates(
        ChannelModel::builder("two-gate-product", 1, 4).drift(0, 3, f),
        0,
        &alpha,
        &beta,
        &alpha_t,
        &beta_t,
    );
    let init = InitialData::new(v0, vec![product_law(&z, &z_t)]).expect("static shape");
    (builder, init, vec![("z", z), ("z_t", z_t)])
}

fn exclusive(params: &PresetParams, lattice: &CircleLattice) -> Built {
    let alpha = params.or("alpha", exp_up);
    let beta = params.or("beta", exp_down);
    let alpha2 = params.or("alpha2", || alpha.clone());
    let beta2 = params.or("beta2", || beta.clone());
    let f = params.or("f", || ScalarFn::new("1-v", |v| 1.0 - v));
    let g = params.or("g", || ScalarFn::new("v/10", |v| v / 10.0));
    let p = params.or("p", || ScalarFn::constant(0.5));
    let v0 = params.or("v0", || bump(lattice));

    let zero = ScalarFn::zero();
    let mut builder = ChannelModel::builder("exclusive", 2, 4)
        .drift(0, 3, f)
        .drift(1, 2, negated(&g))
        .drift(1, 3, negated(&g));
    builder = two_gate_rates(builder, 0, &alpha, &beta, &zero, &zero);
    builder = two_gate_rates(builder, 1, &alpha2, &beta2, &zero, &zero);

    // type 0 ~ product law with both gates Ber(p); type 1 is the block swap
    // e3 -> e1, e4 -> e2, e1 -> e3, e2 -> e4 of type 0
    let first = product_law(&p, &p);
    let second = vec![
        first[2].clone(),
        first[3].clone(),
        first[0].clone(),
        first[1].clone(),
    ];
    let law = first.clone();
    let sampler = Arc::new(move |x: f64, rng: &mut dyn rand::RngCore| {
        let probs: Vec<f64> = law.iter().map(|f| f.eval(x)).collect();
        let z1 = categorical(&probs, rng);
        vec![z1, (z1 + 2) % 4]
    });
    let init = InitialData::new(v0, vec![first, second])
        .expect("static shape")
        .with_joint_sampler(sampler);
    (builder, init, vec![("p", p)])
}

fn macro_density(params: &PresetParams, lattice: &CircleLattice) -> Built {
    let alpha = params.or("alpha", exp_up);
    let beta = params.or("beta", exp_down);
    let f = params.or("f", || ScalarFn::new("1-v", |v| 1.0 - v));
    let p = params.or("p", || ScalarFn::constant(0.5));
    let v0 = params.or("v0", || bump(lattice));
    let q = params.or("q", || steady_open(&alpha, &beta, &v0));

    let zero = ScalarFn::zero();
    let builder = two_gate_rates(
        ChannelModel::builder("macro-density", 1, 4).drift(0, 3, f),
        0,
        &alpha,
        &beta,
        &zero,
        &zero,
    );
    // xi ~ Ber(q) is the gate, xi_tilde ~ Ber(p) marks presence
    let init = InitialData::new(v0, vec![product_law(&q, &p)]).expect("static shape");
    (builder, init, vec![("p", p), ("q", q)])
}

/// Whether configurations `a` and `b` (zero-based) are adjacent on the
/// 4-cube, i.e. differ in exactly one bit.
pub fn hypercube_adjacent(a: usize, b: usize) -> bool {
    (a ^ b).count_ones() == 1
}

const HH_RATES: [&str; 6] = [
    "alpha_m", "beta_m", "alpha_h", "beta_h", "alpha_n", "beta_n",
];

fn textbook_rate(name: &str) -> ScalarFn {
    match name {
        "alpha_m" => ScalarFn::new(HH[0].default, |v| {
            let u = v + 40.0;
            if u.abs() < 1e-7 {
                1.0
            } else {
                0.1 * u / (1.0 - (-u / 10.0).exp())
            }
        }),
        "beta_m" => ScalarFn::new(HH[1].default, |v| 4.0 * (-(v + 65.0) / 18.0).exp()),
        "alpha_h" => ScalarFn::new(HH[2].default, |v| 0.07 * (-(v + 65.0) / 20.0).exp()),
        "beta_h" => ScalarFn::new(HH[3].default, |v| 1.0 / (1.0 + (-(v + 35.0) / 10.0).exp())),
        "alpha_n" => ScalarFn::new(HH[4].default, |v| {
            let u = v + 55.0;
            if u.abs() < 1e-7 {
                0.1
            } else {
                0.01 * u / (1.0 - (-u / 10.0).exp())
            }
        }),
        "beta_n" => ScalarFn::new(HH[5].default, |v| 0.125 * (-(v + 65.0) / 80.0).exp()),
        _ => unreachable!(),
    }
}

/// Per-gate open fractions `alpha/(alpha+beta)` at voltage `v`.
fn gate_steady(alpha: &ScalarFn, beta: &ScalarFn, v0: &ScalarFn, label: &str) -> ScalarFn {
    let (a, b, v) = (alpha.clone(), beta.clone(), v0.clone());
    ScalarFn::new(label, move |x| {
        let vx = v.eval(x);
        let (ra, rb) = (a.eval(vx), b.eval(vx));
        if ra + rb > 0.0 {
            ra / (ra + rb)
        } else {
            0.5
        }
    })
}

/// Probability of configuration `j` (zero-based) when the bits of `j` are
/// independent gates, bit `b` open with probability `open[b]`.
fn bit_law(open: [ScalarFn; 4], j: usize) -> ScalarFn {
    ScalarFn::new(&format!("cube law of configuration {j}"), move |x| {
        (0..4)
            .map(|b| {
                let p = open[b].eval(x);
                if j >> b & 1 == 1 {
                    p
                } else {
                    1.0 - p
                }
            })
            .product()
    })
}

/// Hodgkin-Huxley on the 4-cube. Bits 0-2 of the zero-based configuration
/// are the three `m` gates and bit 3 the `h` gate of sodium; all four bits
/// are `n` gates for potassium. Configuration 15 conducts.
///
/// The gate rates default to the textbook squid-axon formulas (mV, ms) when
/// none is given; supplying only some of them is an error.
fn hodgkin_huxley(params: &PresetParams) -> Result<Built> {
    let given: Vec<&str> = HH_RATES
        .iter()
        .copied()
        .filter(|r| params.get(r).is_some())
        .collect();
    if !given.is_empty() && given.len() < HH_RATES.len() {
        let missing = HH_RATES.iter().find(|r| params.get(r).is_none()).unwrap();
        return Err(Error::Parameter {
            name: missing.to_string(),
            reason: "gate-rate function missing; give all six or none".into(),
        });
    }
    if given.is_empty() {
        log::info!("hodgkin-huxley: using textbook gate-rate formulas");
    }
    let rate = |name: &str| params.or(name, || textbook_rate(name));
    let (am, bm, ah, bh, an, bn) = (
        rate("alpha_m"),
        rate("beta_m"),
        rate("alpha_h"),
        rate("beta_h"),
        rate("alpha_n"),
        rate("beta_n"),
    );
    let conductance = |g: f64, e: f64, label: &str| {
        if g == 0.0 {
            ScalarFn::zero()
        } else {
            ScalarFn::new(label, move |v| -g * (v - e))
        }
    };
    let g_na = conductance(
        params.constant("g_na", 120.0),
        params.constant("e_na", 50.0),
        "-g_na(v-e_na)",
    );
    let g_k = conductance(
        params.constant("g_k", 36.0),
        params.constant("e_k", -77.0),
        "-g_k(v-e_k)",
    );
    let g_l = conductance(
        params.constant("g_l", 0.3),
        params.constant("e_l", -54.387),
        "-g_l(v-e_l)",
    );

    let mut builder = ChannelModel::builder("hodgkin-huxley", 3, 16)
        .drift(0, 15, g_na)
        .drift(1, 15, g_k)
        .drift(2, 0, g_l);
    for a in 0..16 {
        for b in 0..16 {
            if !hypercube_adjacent(a, b) {
                continue;
            }
            let up = b > a;
            let na = match (a ^ b == 8, up) {
                (false, true) => am.clone(),
                (false, false) => bm.clone(),
                (true, true) => ah.clone(),
                (true, false) => bh.clone(),
            };
            let k = if up { an.clone() } else { bn.clone() };
            builder = builder.rate(0, a, b, na).rate(1, a, b, k);
        }
    }

    let v0 = params.or("v0", || ScalarFn::constant(-65.0));
    let z_m = params.or("z_m", || gate_steady(&am, &bm, &v0, HH[13].default));
    let z_h = params.or("z_h", || gate_steady(&ah, &bh, &v0, HH[14].default));
    let z_n = params.or("z_n", || gate_steady(&an, &bn, &v0, HH[15].default));
    let sodium = (0..16)
        .map(|j| bit_law([z_m.clone(), z_m.clone(), z_m.clone(), z_h.clone()], j))
        .collect();
    let potassium = (0..16)
        .map(|j| bit_law([z_n.clone(), z_n.clone(), z_n.clone(), z_n.clone()], j))
        .collect();
    let mut leak = vec![ScalarFn::zero(); 16];
    leak[0] = ScalarFn::constant(1.0);
    let init = InitialData::new(v0, vec![sodium, potassium, leak]).expect("static shape");
    Ok((
        builder,
        init,
        vec![("z_m", z_m), ("z_h", z_h), ("z_n", z_n)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_initial_state;

    fn lattice() -> CircleLattice {
        CircleLattice::new(8, 2.0, 1.0).unwrap()
    }

    fn build(name: &str) -> (ChannelModel, InitialData) {
        preset_model(name, &PresetParams::new(), &lattice(), None).unwrap()
    }

    #[test]
    fn toy_matrix_at_the_symmetry_point() {
        let (m, _) = build("toy");
        assert_eq!((m.types(), m.configs()), (2, 2));
        let a = m.transition_rates(0.5, 0).unwrap();
        assert_eq!(a, vec![-1.0, 1.0, 1.0, -1.0]);
        assert!(m
            .transition_rates(0.3, 1)
            .unwrap()
            .iter()
            .all(|&r| r == 0.0));
        // open gate pulls toward 1, the leak toward 0
        assert_eq!(m.reaction(&[0, 0], 0.0), 1.0);
        assert!((m.reaction(&[1, 0], 0.5) + 0.05).abs() < 1e-15);
        // closed -> open at alpha, open -> closed at beta
        assert!((m.rate(0, 1, 0, 0.8) - (3.0f64).exp()).abs() < 1e-12);
        assert!((m.rate(0, 0, 1, 0.8) - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn toy_initial_bump_matches_the_index_formula() {
        let lat = CircleLattice::from_spacing(0.25, 16.0, 1.0).unwrap();
        let (_, init) = preset_model("toy", &PresetParams::new(), &lat, None).unwrap();
        let state = sample_initial_state(&lat, &init, 3).unwrap();
        let n_per_unit = 4.0;
        for k in 0..lat.n() {
            let e = (k as f64 - (16.0 * n_per_unit - 1.0) / 2.0) / n_per_unit;
            assert!((state.v[k] - (-e * e).exp()).abs() < 1e-14);
            assert_eq!(state.config(k, 1), 0);
        }
    }

    #[test]
    fn two_gate_matrix_entries() {
        let p = PresetParams::new()
            .with("alpha", ScalarFn::constant(1.0))
            .with("beta", ScalarFn::constant(2.0))
            .with("alpha_t", ScalarFn::constant(3.0))
            .with("beta_t", ScalarFn::constant(5.0));
        let (m, _) = preset_model("two-gate-product", &p, &lattice(), None).unwrap();
        let a = m.transition_rates(0.0, 0).unwrap();
        #[rustfmt::skip]
        let expected = [
            -4.0, 1.0, 3.0, 0.0,
            2.0, -5.0, 0.0, 3.0,
            5.0, 0.0, -6.0, 1.0,
            0.0, 5.0, 2.0, -7.0,
        ];
        assert_eq!(a, expected);
    }

    #[test]
    fn hodgkin_huxley_cube() {
        let (m, init) = build("hodgkin-huxley");
        assert_eq!((m.types(), m.configs()), (3, 16));
        for a in 0..16 {
            assert_eq!(m.targets(0, a).len(), 4);
            assert_eq!(m.targets(1, a).len(), 4);
            assert!(m.targets(2, a).is_empty());
        }
        // h-gate edges are exactly the |b - a| = 8 ones
        let v = -20.0;
        let (am, ah, bh) = (
            textbook_rate("alpha_m"),
            textbook_rate("alpha_h"),
            textbook_rate("beta_h"),
        );
        assert_eq!(m.rate(0, 2, 10, v), ah.eval(v));
        assert_eq!(m.rate(0, 10, 2, v), bh.eval(v));
        assert_eq!(m.rate(0, 0, 4, v), am.eval(v));
        // conductances only at (Na, 15), (K, 15), (leak, 0)
        for i in 0..3 {
            for j in 0..16 {
                let wired = matches!((i, j), (0, 15) | (1, 15) | (2, 0));
                assert_eq!(!m.drift_fn(i, j).is_zero(), wired, "({i},{j})");
            }
        }
        // initial law sums to one and the leak is conducting
        let p0 = init.probabilities(0, 0.3).unwrap();
        assert!((p0.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(init.probabilities(2, 0.3).unwrap()[0], 1.0);
    }

    #[test]
    fn hodgkin_huxley_rates_are_continuous_at_removable_points() {
        let am = textbook_rate("alpha_m");
        assert!((am.eval(-40.0) - am.eval(-40.0 + 1e-5)).abs() < 1e-5);
        let an = textbook_rate("alpha_n");
        assert!((an.eval(-55.0) - an.eval(-55.0 - 1e-5)).abs() < 1e-5);
    }

    #[test]
    fn partial_hh_rates_are_rejected() {
        let p = PresetParams::new().with("alpha_m", ScalarFn::constant(1.0));
        let err = preset_model("hodgkin-huxley", &p, &lattice(), None).unwrap_err();
        assert!(matches!(err, Error::Parameter { .. }));
    }

    #[test]
    fn unknown_names_and_bad_fields() {
        assert!(matches!(
            preset_model("nope", &PresetParams::new(), &lattice(), None),
            Err(Error::UnknownPreset(_))
        ));
        let p = PresetParams::new().with("gamma", ScalarFn::zero());
        assert!(preset_model("toy", &p, &lattice(), None).is_err());
        let p = PresetParams::new().with("p", ScalarFn::constant(1.2));
        assert!(matches!(
            preset_model("macro-density", &p, &lattice(), None),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn exclusive_blocks_and_coupled_draw() {
        let (m, init) = build("exclusive");
        for i in 0..2 {
            let a = m.transition_rates(0.4, i).unwrap();
            for (r, c) in [
                (0, 2),
                (0, 3),
                (1, 2),
                (1, 3),
                (2, 0),
                (2, 1),
                (3, 0),
                (3, 1),
            ] {
                assert_eq!(a[r * 4 + c], 0.0);
            }
        }
        let lat = CircleLattice::new(200, 4.0, 1.0).unwrap();
        let state = sample_initial_state(&lat, &init, 9).unwrap();
        for k in 0..200 {
            let (z1, z2) = (state.config(k, 0), state.config(k, 1));
            assert_eq!(z2, [2, 3, 0, 1][z1]);
            // exactly one of the f channel (z1 = e4) and g channel (z2 in {e3, e4}) conducts at most
            assert!(!(z1 == 3 && z2 >= 2));
        }
    }

    #[test]
    fn macro_density_law() {
        let p = PresetParams::new()
            .with("p", ScalarFn::constant(0.2))
            .with("q", ScalarFn::constant(0.7));
        let (_, init) = preset_model("macro-density", &p, &lattice(), None).unwrap();
        let probs = init.probabilities(0, 0.0).unwrap();
        let expected = [0.8 * 0.3, 0.8 * 0.7, 0.2 * 0.3, 0.2 * 0.7];
        for (a, b) in probs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cube_adjacency_has_degree_four() {
        for a in 0..16 {
            assert_eq!((0..16).filter(|&b| hypercube_adjacent(a, b)).count(), 4);
        }
    }
}
