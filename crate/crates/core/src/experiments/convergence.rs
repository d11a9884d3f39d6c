use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::SupError;
use super::slopes::{loglog_slope, SlopeFit};
use super::with_pool;
use crate::averaging::lattice_window;
use crate::custom::CustomModel;
use crate::det::{solve_mean_field_with, MeanFieldOptions, MeanFieldTrajectory};
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::model::{sample_initial_state_with, ChannelModel, InitialData};
use crate::presets::{preset_model, PresetParams};
use crate::stoch::{run, stream_rng, Algorithm, SimOptions};

/// A preset with parameter overrides, instantiated per lattice.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub preset: String,
    pub params: PresetParams,
    pub voltage_range: Option<(f64, f64)>,
    /// Replaces the preset when set.
    pub custom: Option<CustomModel>,
}

impl ModelSpec {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: name.to_string(),
            params: PresetParams::new(),
            voltage_range: None,
            custom: None,
        }
    }

    pub fn build(&self, lattice: &CircleLattice) -> Result<(ChannelModel, InitialData)> {
        match &self.custom {
            Some(c) => c.build(lattice, self.voltage_range.unwrap_or((0.0, 1.0))),
            None => preset_model(&self.preset, &self.params, lattice, self.voltage_range),
        }
    }
}

/// One simulated path of a sweep. Failed runs keep their identity and the
/// failure message but no error values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: u64,
    pub algorithm: Algorithm,
    pub n: usize,
    pub h: f64,
    pub p: Option<f64>,
    pub seed: u64,
    pub t_end: f64,
    /// `sup_t max_k |V - U|`.
    pub error_v: Option<f64>,
    /// `sup_t max_k |Zbar - S|`, when requested.
    pub error_zbar: Option<f64>,
    pub wall_time: f64,
    pub failure: Option<String>,
}

impl ExperimentRecord {
    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.error_v.is_some()
    }

    /// Equality ignoring the wall time.
    pub fn same_result(&self, other: &Self) -> bool {
        Self {
            wall_time: 0.0,
            ..self.clone()
        } == Self {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

/// An h-sweep: `samples` paths at each spacing in `hs`, each compared with
/// the mean field on the same lattice.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub model: ModelSpec,
    pub length: f64,
    pub diffusivity: f64,
    pub hs: Vec<f64>,
    pub samples: usize,
    pub t_end: f64,
    pub algorithm: Algorithm,
    /// `tau` for IL, `dt` for the oracle.
    pub step: f64,
    pub sim: SimOptions,
    pub mean_field_dt: f64,
    /// Averaging exponent; enables the local-average error.
    pub p: Option<f64>,
    pub seed: u64,
    pub workers: usize,
}

impl ConvergenceConfig {
    /// Toy system on a circle of length 16 up to `T = 15`, at `h = 1/m` for
    /// each `m` in `spacings`.
    pub fn toy(spacings: impl IntoIterator<Item = usize>, samples: usize, seed: u64) -> Self {
        Self {
            model: ModelSpec::preset("toy"),
            length: 16.0,
            diffusivity: 1.0,
            hs: spacings.into_iter().map(|m| 1.0 / m as f64).collect(),
            samples,
            t_end: 15.0,
            algorithm: Algorithm::Pet,
            step: 0.125,
            sim: SimOptions::default(),
            mean_field_dt: 1e-2,
            p: None,
            seed,
            workers: 0,
        }
    }

    pub fn run_count(&self) -> usize {
        self.hs.len() * self.samples
    }
}

struct Column {
    lattice: CircleLattice,
    model: ChannelModel,
    init: InitialData,
    mf: MeanFieldTrajectory,
    window: Option<usize>,
}

fn prepare(config: &ConvergenceConfig, h: f64) -> Result<Column> {
    let lattice = CircleLattice::from_spacing(h, config.length, config.diffusivity)?;
    let (model, init) = config.model.build(&lattice)?;
    let mf = solve_mean_field_with(
        &lattice,
        &model,
        &init,
        config.t_end,
        config.mean_field_dt,
        MeanFieldOptions {
            record_every: 1,
            keep_occupancy: config.p.is_some(),
        },
    )?;
    let window = config.p.map(|p| lattice_window(&lattice, p)).transpose()?;
    Ok(Column {
        lattice,
        model,
        init,
        mf,
        window,
    })
}

fn simulate(
    config: &ConvergenceConfig,
    column: &Column,
    run_id: u64,
) -> Result<(f64, Option<f64>)> {
    let mut rng = stream_rng(config.seed, run_id);
    let mut state = sample_initial_state_with(&column.lattice, &column.init, &mut rng)?;
    let mut probe = SupError::new(&column.mf);
    if let Some(window) = column.window {
        probe = probe.with_average(&column.lattice, window)?;
    }
    run(
        config.algorithm,
        &column.lattice,
        &column.model,
        &mut state,
        config.t_end,
        config.step,
        &config.sim,
        &mut rng,
        &mut probe,
    )?;
    Ok((probe.voltage, column.window.map(|_| probe.occupancy)))
}

/// Runs the whole sweep; rows come back ordered by `run_id = c * samples + s`
/// for column `c` and sample `s`, each on its own random stream.
pub fn convergence_study(config: &ConvergenceConfig) -> Result<Vec<ExperimentRecord>> {
    convergence_study_resume(config, &[])
}

/// Like [`convergence_study`], reusing the rows in `done` (matched by
/// `run_id`) and simulating only the missing ones.
pub fn convergence_study_resume(
    config: &ConvergenceConfig,
    done: &[ExperimentRecord],
) -> Result<Vec<ExperimentRecord>> {
    convergence_study_with(config, done, &|_| {})
}

/// Like [`convergence_study_resume`], handing every newly simulated row to
/// `on_record` as soon as it is finished (from worker threads, in completion
/// order), e.g. to journal progress.
pub fn convergence_study_with(
    config: &ConvergenceConfig,
    done: &[ExperimentRecord],
    on_record: &(dyn Fn(&ExperimentRecord) + Sync),
) -> Result<Vec<ExperimentRecord>> {
    if config.samples == 0 || config.hs.is_empty() {
        return Err(Error::Parameter {
            name: "experiment.samples".into(),
            reason: "the sweep needs at least one h and one sample".into(),
        });
    }
    let existing: BTreeMap<u64, &ExperimentRecord> = done.iter().map(|r| (r.run_id, r)).collect();
    let samples = config.samples as u64;
    with_pool(config.workers, || {
        let columns: Vec<std::result::Result<Column, String>> = config
            .hs
            .par_iter()
            .map(|&h| prepare(config, h).map_err(|e| e.to_string()))
            .collect();
        let jobs: Vec<u64> = (0..config.run_count() as u64).collect();
        jobs.par_iter()
            .map(|&run_id| {
                if let Some(r) = existing.get(&run_id) {
                    return (*r).clone();
                }
                let c = (run_id / samples) as usize;
                let h = config.hs[c];
                let mut record = ExperimentRecord {
                    run_id,
                    algorithm: config.algorithm,
                    n: (config.length / h).round() as usize,
                    h,
                    p: config.p,
                    seed: config.seed,
                    t_end: config.t_end,
                    error_v: None,
                    error_zbar: None,
                    wall_time: 0.0,
                    failure: None,
                };
                let start = Instant::now();
                match &columns[c] {
                    Err(e) => record.failure = Some(e.clone()),
                    Ok(column) => match simulate(config, column, run_id) {
                        Ok((ev, ez)) => {
                            record.error_v = Some(ev);
                            record.error_zbar = ez;
                        }
                        Err(e) => record.failure = Some(format!("run {run_id}: {e}")),
                    },
                }
                record.wall_time = start.elapsed().as_secs_f64();
                on_record(&record);
                record
            })
            .collect()
    })
}

/// Sample statistics of the voltage error at one spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub h: f64,
    pub n: usize,
    pub count: usize,
    pub failed: usize,
    pub mean: f64,
    pub std_err: f64,
}

/// Per-spacing summaries, in order of first appearance.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SizeSummary> {
    let mut order: Vec<f64> = Vec::new();
    let mut groups: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for r in records {
        let idx = match order.iter().position(|&h| h == r.h) {
            Some(i) => i,
            None => {
                order.push(r.h);
                groups.push((r.n, Vec::new(), 0));
                order.len() - 1
            }
        };
        match r.error_v.filter(|_| r.ok()) {
            Some(e) => groups[idx].1.push(e),
            None => groups[idx].2 += 1,
        }
    }
    order
        .into_iter()
        .zip(groups)
        .map(|(h, (n, errs, failed))| {
            let count = errs.len();
            let mean = errs.iter().sum::<f64>() / count.max(1) as f64;
            let var = if count > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            SizeSummary {
                h,
                n,
                count,
                failed,
                mean: if count == 0 { f64::NAN } else { mean },
                std_err: (var / count.max(1) as f64).sqrt(),
            }
        })
        .collect()
}

/// Slope of log(mean error) against log(h) over the spacings with data.
pub fn mean_error_fit(records: &[ExperimentRecord]) -> Result<SlopeFit> {
    let points: Vec<(f64, f64)> = summarize(records)
        .into_iter()
        .filter(|s| s.count > 0)
        .map(|s| (s.h, s.mean))
        .collect();
    loglog_slope(&points)
}

/// Successful voltage errors grouped by spacing: `(hs, columns)`.
pub fn error_columns(records: &[ExperimentRecord]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut hs: Vec<f64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for r in records {
        let c = match hs.iter().position(|&h| h == r.h) {
            Some(c) => c,
            None => {
                hs.push(r.h);
                columns.push(Vec::new());
                hs.len() - 1
            }
        };
        if let Some(e) = r.error_v.filter(|_| r.ok()) {
            columns[c].push(e);
        }
    }
    (hs, columns)
}

/// Slope of each individual experiment (sample index `s` across all
/// spacings); experiments with a failed or zero-error run are skipped.
pub fn per_sample_slopes(records: &[ExperimentRecord], samples: usize) -> Vec<SlopeFit> {
    let mut by_sample: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut spoiled = std::collections::BTreeSet::new();
    for r in records {
        let s = r.run_id % samples as u64;
        match r.error_v.filter(|&e| r.ok() && e > 0.0) {
            Some(e) => by_sample.entry(s).or_default().push((r.h, e)),
            None => {
                spoiled.insert(s);
            }
        }
    }
    by_sample
        .into_iter()
        .filter(|(s, _)| !spoiled.contains(s))
        .filter_map(|(_, pts)| loglog_slope(&pts).ok())
        .collect()
}
