//! Run configuration: a TOML document with `[model]`, `[lattice]`,
//! `[algorithm]`, `[experiment]` and `[io]` sections plus a top-level `seed`.
//! Every field has a default; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use pdmp_core::custom::CustomModel;
use pdmp_core::experiments::{ClockKind, ModelSpec};
use pdmp_core::expr::Expr;
use pdmp_core::presets::{default_voltage_range, preset_parameters, ParamKind, PresetParams};
use pdmp_core::stoch::{Algorithm, BoundOptions, BoundPolicy, SimOptions};
use pdmp_core::{CircleLattice, ScalarFn};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Simulate,
    MeanField,
    Converge,
    AlgoError,
    CorrectorCheck,
    PoissonLln,
    HhDemo,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subcommand::Simulate => "simulate",
            Subcommand::MeanField => "mean-field",
            Subcommand::Converge => "converge",
            Subcommand::AlgoError => "algo-error",
            Subcommand::CorrectorCheck => "corrector-check",
            Subcommand::PoissonLln => "poisson-lln",
            Subcommand::HhDemo => "hh-demo",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{key}: {reason}")]
    Range { key: String, reason: String },
}

fn range(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// A preset parameter: an expression (string) or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ModelSection {
    /// Preset id; unset means `toy` (`hodgkin-huxley` for `hh-demo`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    pub params: BTreeMap<String, ParamValue>,
    /// Fully expression-defined model; replaces the preset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomModel>,
}

impl ModelSection {
    pub fn preset_name(&self) -> &str {
        if self.custom.is_some() {
            "custom"
        } else {
            self.preset.as_deref().unwrap_or("toy")
        }
    }

    pub fn spec(&self) -> Result<ModelSpec, ConfigError> {
        let mut params = PresetParams::new();
        let mut spec = ModelSpec::preset(self.preset_name());
        if self.custom.is_none() {
            let table = preset_parameters(self.preset_name())
                .map_err(|e| range("model.preset", e.to_string()))?;
            for (name, value) in &self.params {
                let key = format!("model.params.{name}");
                let kind = table
                    .iter()
                    .find(|s| s.name == name)
                    .ok_or_else(|| {
                        range(
                            &key,
                            format!("not a parameter of preset `{}`", self.preset_name()),
                        )
                    })?
                    .kind;
                let f = match value {
                    ParamValue::Number(c) if c.is_finite() => ScalarFn::constant(*c),
                    ParamValue::Number(c) => {
                        return Err(range(&key, format!("must be finite, got {c}")))
                    }
                    ParamValue::Expr(src) => {
                        let var = match kind {
                            ParamKind::Constant => "_",
                            k => k.variable(),
                        };
                        ScalarFn::from_expr(
                            Expr::parse(src, var).map_err(|e| range(&key, e.to_string()))?,
                        )
                    }
                };
                params.insert(name, f);
            }
        }
        spec.params = params;
        spec.voltage_range = Some(self.voltage_range()?);
        spec.custom = self.custom.clone();
        Ok(spec)
    }

    fn voltage_range(&self) -> Result<(f64, f64), ConfigError> {
        match (self.v_min, self.v_max) {
            (Some(lo), Some(hi)) => Ok((lo, hi)),
            (None, None) if self.custom.is_some() => Ok((0.0, 1.0)),
            (None, None) => default_voltage_range(self.preset_name())
                .map_err(|e| range("model.preset", e.to_string())),
            _ => Err(range("model.v_max", "give both v_min and v_max or neither")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    /// Number of compartments; alternative to `h`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Compartment spacing; alternative to `n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub length: f64,
    pub diffusivity: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            n: None,
            h: None,
            length: 16.0,
            diffusivity: 1.0,
        }
    }
}

impl LatticeSection {
    pub fn build(&self) -> Result<CircleLattice, ConfigError> {
        let lattice = match (self.n, self.h) {
            (Some(n), _) => CircleLattice::new(n, self.length, self.diffusivity),
            (None, Some(h)) => CircleLattice::from_spacing(h, self.length, self.diffusivity),
            (None, None) => CircleLattice::from_spacing(0.125, self.length, self.diffusivity),
        };
        lattice.map_err(|e| {
            range(
                if self.n.is_some() {
                    "lattice.n"
                } else {
                    "lattice.h"
                },
                e.to_string(),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub kind: Algorithm,
    /// Longest voltage substep.
    pub dt_max: f64,
    /// IL leap length.
    pub tau: f64,
    /// Oracle step.
    pub dt: f64,
    /// Recording grid spacing; unset means `T / 512`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_dt: Option<f64>,
    pub bound_policy: BoundPolicy,
    pub bound_margin: f64,
    pub bound_samples: usize,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let sim = SimOptions::default();
        Self {
            kind: Algorithm::Pet,
            dt_max: sim.dt_max,
            tau: 0.125,
            dt: 1e-3,
            record_dt: None,
            bound_policy: sim.bound.policy,
            bound_margin: sim.bound.margin,
            bound_samples: sim.bound.samples,
        }
    }
}

impl AlgorithmSection {
    pub fn sim(&self) -> SimOptions {
        SimOptions {
            dt_max: self.dt_max,
            record_dt: self.record_dt,
            bound: BoundOptions {
                policy: self.bound_policy,
                margin: self.bound_margin,
                samples: self.bound_samples,
            },
        }
    }

    /// The step argument of the chosen simulator.
    pub fn step(&self) -> f64 {
        match self.kind {
            Algorithm::Il => self.tau,
            _ => self.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub t_end: f64,
    /// Spacings `h = 1/m`: an array of `m`, or an inclusive range `"2..12"`.
    #[serde(deserialize_with = "spacing_list")]
    pub h_inverse: Vec<usize>,
    pub samples: usize,
    /// Averaging exponent; enables the averaged-occupancy error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub mean_field_dt: f64,
    pub taus: Vec<f64>,
    pub bootstrap: usize,
    pub grid_points: usize,
    pub draws: usize,
    pub bins: usize,
    pub gamma: f64,
    /// Poisson windows are `i^2` for `i = 1..=windows`.
    pub windows: usize,
    pub clock: ClockKind,
    pub clock_cap: f64,
    pub trials: usize,
    pub corrector_n: Vec<usize>,
    pub corrector_p: Vec<f64>,
    pub corrector_trials: usize,
    pub clamp_v: f64,
    pub clamp_sites: usize,
    pub clamp_t_end: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            t_end: 15.0,
            h_inverse: (2..=12).collect(),
            samples: 10,
            p: None,
            mean_field_dt: 1e-2,
            taus: vec![0.25, 0.125],
            bootstrap: 200,
            grid_points: 512,
            draws: 10_000,
            bins: 40,
            gamma: 2.0,
            windows: 40,
            clock: ClockKind::Identity,
            clock_cap: 1.0,
            trials: 100,
            corrector_n: vec![64, 256],
            corrector_p: vec![1.0 / 3.0, 0.5],
            corrector_trials: 1000,
            clamp_v: -30.0,
            clamp_sites: 10_000,
            clamp_t_end: 20.0,
        }
    }
}

fn spacing_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<usize>),
        Range(String),
    }
    match Raw::deserialize(d)? {
        Raw::List(v) => Ok(v),
        Raw::Range(s) => parse_range(&s).map_err(serde::de::Error::custom),
    }
}

/// `"a..b"` (inclusive) to `[a, ..., b]`.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("expected an inclusive range like \"2..12\", got \"{s}\"");
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let (a, b): (usize, usize) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Tables (trajectories, records, reports).
    Csv,
    /// `summary.json`.
    Json,
    /// Binary final state of `simulate`.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl IoSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Subcommand this file was resolved for; must agree with the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Subcommand>,
    pub seed: u64,
    pub model: ModelSection,
    pub lattice: LatticeSection,
    pub algorithm: AlgorithmSection,
    pub experiment: ExperimentSection,
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 1,
            model: ModelSection::default(),
            lattice: LatticeSection::default(),
            algorithm: AlgorithmSection::default(),
            experiment: ExperimentSection::default(),
            io: IoSection::default(),
        }
    }
}

/// Parses and range-checks a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(0, |s| {
            1 + text[..s.start.min(text.len())].matches('\n').count()
        }),
        message: e.message().trim().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// The config as a TOML document with every field written out.
pub fn emit_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(range(key, format!("must be positive and finite, got {x}")))
    }
}

fn at_least(key: &str, x: usize, min: usize) -> Result<(), ConfigError> {
    if x >= min {
        Ok(())
    } else {
        Err(range(key, format!("must be at least {min}, got {x}")))
    }
}

fn exponent(key: &str, p: f64) -> Result<(), ConfigError> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(range(key, format!("must lie in [0, 1), got {p}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        // TOML integers are signed
        if i64::try_from(self.seed).is_err() {
            return Err(range(
                "seed",
                format!("must be at most {}, got {}", i64::MAX, self.seed),
            ));
        }
        let m = &self.model;
        if m.custom.is_some() {
            if m.preset.as_deref().is_some_and(|p| p != "custom") {
                return Err(range(
                    "model.preset",
                    "a custom model replaces the preset; drop one of them",
                ));
            }
            if !m.params.is_empty() {
                return Err(range(
                    "model.params",
                    "preset parameters do not apply to a custom model",
                ));
            }
        } else if let Some(p) = &m.preset {
            preset_parameters(p).map_err(|e| range("model.preset", e.to_string()))?;
        }
        if let (Some(lo), Some(hi)) = (m.v_min, m.v_max) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(range(
                    "model.v_max",
                    format!("need finite v_min <= v_max, got [{lo}, {hi}]"),
                ));
            }
        }
        m.spec()?;

        let l = &self.lattice;
        if l.n.is_some() && l.h.is_some() {
            return Err(range("lattice.h", "give either n or h, not both"));
        }
        if let Some(n) = l.n {
            at_least("lattice.n", n, 1)?;
        }
        if let Some(h) = l.h {
            positive("lattice.h", h)?;
        }
        positive("lattice.length", l.length)?;
        if !(l.diffusivity >= 0.0 && l.diffusivity.is_finite()) {
            return Err(range(
                "lattice.diffusivity",
                format!("must be nonnegative, got {}", l.diffusivity),
            ));
        }

        let a = &self.algorithm;
        positive("algorithm.dt_max", a.dt_max)?;
        positive("algorithm.tau", a.tau)?;
        positive("algorithm.dt", a.dt)?;
        if let Some(r) = a.record_dt {
            positive("algorithm.record_dt", r)?;
        }
        if !(a.bound_margin >= 1.0 && a.bound_margin.is_finite()) {
            return Err(range(
                "algorithm.bound_margin",
                format!("must be at least 1, got {}", a.bound_margin),
            ));
        }
        at_least("algorithm.bound_samples", a.bound_samples, 2)?;

        let e = &self.experiment;
        positive("experiment.t_end", e.t_end)?;
        if e.h_inverse.is_empty() {
            return Err(range("experiment.h_inverse", "must not be empty"));
        }
        if e.h_inverse.contains(&0) {
            return Err(range("experiment.h_inverse", "entries must be positive"));
        }
        at_least("experiment.samples", e.samples, 1)?;
        if let Some(p) = e.p {
            exponent("experiment.p", p)?;
        }
        positive("experiment.mean_field_dt", e.mean_field_dt)?;
        if e.taus.is_empty() {
            return Err(range("experiment.taus", "must not be empty"));
        }
        for &t in &e.taus {
            positive("experiment.taus", t)?;
        }
        at_least("experiment.bootstrap", e.bootstrap, 1)?;
        at_least("experiment.grid_points", e.grid_points, 1)?;
        at_least("experiment.draws", e.draws, 1)?;
        at_least("experiment.bins", e.bins, 1)?;
        positive("experiment.gamma", e.gamma)?;
        at_least("experiment.windows", e.windows, 1)?;
        positive("experiment.clock_cap", e.clock_cap)?;
        at_least("experiment.trials", e.trials, 1)?;
        if e.corrector_n.is_empty() || e.corrector_p.is_empty() {
            return Err(range(
                "experiment.corrector_n",
                "corrector_n and corrector_p must not be empty",
            ));
        }
        for &n in &e.corrector_n {
            at_least("experiment.corrector_n", n, 1)?;
        }
        for &p in &e.corrector_p {
            exponent("experiment.corrector_p", p)?;
        }
        at_least("experiment.corrector_trials", e.corrector_trials, 1)?;
        if !e.clamp_v.is_finite() {
            return Err(range("experiment.clamp_v", "must be finite"));
        }
        at_least("experiment.clamp_sites", e.clamp_sites, 1)?;
        positive("experiment.clamp_t_end", e.clamp_t_end)?;

        if self.io.formats.is_empty() {
            return Err(range(
                "io.formats",
                "must list at least one of csv, json, state",
            ));
        }
        Ok(())
    }

    /// Fills the subcommand-dependent defaults that the echoed file should
    /// spell out.
    pub fn resolve(&mut self, command: Subcommand) -> Result<(), ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(range(
                    "command",
                    format!("config was written for `{c}`, not `{command}`"),
                ));
            }
        }
        self.command = Some(command);
        if self.model.custom.is_none() && self.model.preset.is_none() {
            let p = if command == Subcommand::HhDemo {
                "hodgkin-huxley"
            } else {
                "toy"
            };
            self.model.preset = Some(p.to_string());
        }
        if command == Subcommand::HhDemo {
            if self.model.preset_name() != "hodgkin-huxley" {
                return Err(range(
                    "model.preset",
                    "hh-demo runs the hodgkin-huxley preset",
                ));
            }
            // a depolarising bump in the middle, so the cable does something
            self.model.params.entry("v0".into()).or_insert_with(|| {
                ParamValue::Expr(format!("-65+50*exp(-(x-{})^2)", self.lattice.length / 2.0))
            });
        }
        if self.model.custom.is_none() && self.model.v_min.is_none() && self.model.v_max.is_none() {
            let (lo, hi) = default_voltage_range(self.model.preset_name())
                .map_err(|e| range("model.preset", e.to_string()))?;
            self.model.v_min = Some(lo);
            self.model.v_max = Some(hi);
        }
        if self.lattice.n.is_none() && self.lattice.h.is_none() {
            self.lattice.h = Some(0.125);
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toy_converge_config() {
        let c = parse_config(
            "seed = 1\n[model]\npreset = \"toy\"\n[experiment]\nh_inverse = \"2..12\"\nsamples = 10\nt_end = 15\n",
        )
        .unwrap();
        assert_eq!(c.experiment.h_inverse, (2..=12).collect::<Vec<_>>());
        assert_eq!(c.experiment.samples, 10);
        assert_eq!(c.experiment.t_end, 15.0);
        assert_eq!(c.seed, 1);
        assert_eq!(c.model.preset_name(), "toy");
    }

    #[test]
    fn range_errors_name_the_key() {
        let err = parse_config("[experiment]\np = 1.5\n").unwrap_err();
        assert!(
            matches!(&err, ConfigError::Range { key, .. } if key == "experiment.p"),
            "{err}"
        );
        assert!(err.to_string().starts_with("experiment.p:"));
        let err = parse_config("[lattice]\nn = 8\nh = 0.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Range { key, .. } if key == "lattice.h"));
        let err = parse_config("[model]\npreset = \"nope\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Range { key, .. } if key == "model.preset"));
        let err = parse_config("[model.params]\nalpha = \"exp(x)\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Range { key, .. } if key == "model.params.alpha"));
    }

    #[test]
    fn unknown_keys_and_syntax_errors_carry_a_line() {
        let err = parse_config("seed = 1\n\n[lattice]\nlenght = 3\n").unwrap_err();
        assert!(
            matches!(&err, ConfigError::Parse { line: 4, message } if message.contains("lenght")),
            "{err:?}"
        );
        let err = parse_config("seed = 1\n[io\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn params_accept_numbers_and_expressions() {
        let c = parse_config("[model]\npreset = \"hodgkin-huxley\"\n[model.params]\ng_na = 100\nbeta_n = \"0.1*exp(-(v+65)/80)\"\n")
            .unwrap();
        let spec = c.model.spec().unwrap();
        assert_eq!(spec.params.get("g_na").unwrap().eval(0.0), 100.0);
        assert!((spec.params.get("beta_n").unwrap().eval(-65.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn resolve_spells_out_defaults() {
        let mut c = parse_config("").unwrap();
        c.resolve(Subcommand::Simulate).unwrap();
        assert_eq!(c.model.preset.as_deref(), Some("toy"));
        assert_eq!((c.model.v_min, c.model.v_max), (Some(0.0), Some(1.0)));
        assert_eq!(c.lattice.h, Some(0.125));
        let text = emit_config(&c);
        assert!(text.contains("command = \"simulate\""));
        assert_eq!(parse_config(&text).unwrap(), c);
        assert!(c.clone().resolve(Subcommand::Converge).is_err());

        let mut hh = parse_config("").unwrap();
        hh.resolve(Subcommand::HhDemo).unwrap();
        assert_eq!(hh.model.preset.as_deref(), Some("hodgkin-huxley"));
        assert!(hh.model.params.contains_key("v0"));
    }
}
