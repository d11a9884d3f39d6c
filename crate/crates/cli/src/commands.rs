//! Subcommand dispatch. Each command writes its files atomically under the
//! output directory and returns a one-line summary plus a violation count.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use pdmp_core::averaging::corrector_bound_report;
use pdmp_core::det::solve_mean_field;
use pdmp_core::experiments::{
    algorithmic_error, convergence_study_with, error_columns, hh_clamp_check_with, histogram,
    mean_error_fit, per_sample_slopes, poisson_lln_check, summarize, swap_histogram,
    AlgoErrorConfig, ClampConfig, ConvergenceConfig, ExperimentRecord, PoissonConfig,
};
use pdmp_core::io::{
    atomic_write, encode_state, write_events_csv, write_mean_field_csv, write_rows,
    write_trajectory_csv,
};
use pdmp_core::model::sample_initial_state_with;
use pdmp_core::stoch::{run, stream_rng, Recorder, Trajectory};
use serde::Serialize;

use crate::config::{emit_config, parse_config, Format, RunConfig, Subcommand};

/// What a finished command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub violations: usize,
}

const CONFIG_ECHO: &str = "config.toml";
const RECORDS: &str = "records.csv";
const JOURNAL: &str = "records.partial.csv";

/// Runs a resolved config with `workers` threads (0 = one per core).
pub fn execute(config: &RunConfig, workers: usize) -> Result<Outcome> {
    let command = config
        .command
        .context("config has not been resolved to a subcommand")?;
    let out = &config.io.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let previous = fs::read_to_string(out.join(CONFIG_ECHO)).ok();
    write_text(&out.join(CONFIG_ECHO), &emit_config(config))?;
    match command {
        Subcommand::Simulate => simulate(config),
        Subcommand::MeanField => mean_field(config),
        Subcommand::Converge => {
            let resumable = previous
                .and_then(|text| parse_config(&text).ok())
                .is_some_and(|prev| prev == *config);
            converge(config, workers, resumable)
        }
        Subcommand::AlgoError => algo_error(config, workers),
        Subcommand::CorrectorCheck => corrector_check(config),
        Subcommand::PoissonLln => poisson_lln(config),
        Subcommand::HhDemo => hh_demo(config, workers),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, |w| Ok(w.write_all(text.as_bytes())?))
        .with_context(|| format!("writing {}", path.display()))
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    atomic_write(path, |w| write_rows(w, rows))
        .with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(config: &RunConfig, value: &T) -> Result<()> {
    if config.io.wants(Format::Json) {
        write_text(
            &config.io.out_dir.join("summary.json"),
            &serde_json::to_string_pretty(value)?,
        )?;
    }
    Ok(())
}

fn simulate_path(config: &RunConfig, prefix: &str) -> Result<Trajectory> {
    let lattice = config.lattice.build()?;
    let (model, init) = config.model.spec()?.build(&lattice)?;
    let mut rng = stream_rng(config.seed, 0);
    let mut state = sample_initial_state_with(&lattice, &init, &mut rng)?;
    let mut recorder = Recorder::new();
    let a = &config.algorithm;
    let stats = run(
        a.kind,
        &lattice,
        &model,
        &mut state,
        config.experiment.t_end,
        a.step(),
        &a.sim(),
        &mut rng,
        &mut recorder,
    )
    .with_context(|| format!("{} run with seed {} (run_id 0)", a.kind, config.seed))?;
    let traj = recorder.finish(stats);
    let out = &config.io.out_dir;
    if config.io.wants(Format::Csv) {
        let path = out.join(format!("{prefix}trajectory.csv"));
        atomic_write(&path, |w| write_trajectory_csv(w, &traj))?;
        let path = out.join(format!("{prefix}events.csv"));
        atomic_write(&path, |w| write_events_csv(w, &traj))?;
    }
    if config.io.wants(Format::State) {
        let bytes = encode_state(&state);
        atomic_write(&out.join(format!("{prefix}state.bin")), |w| {
            Ok(w.write_all(&bytes)?)
        })?;
    }
    Ok(traj)
}

#[derive(Serialize)]
struct SimulateSummary {
    algorithm: String,
    n: usize,
    t_end: f64,
    snapshots: usize,
    events: u64,
    candidates: u64,
    lambda_global: Option<f64>,
}

fn simulate_summary(config: &RunConfig, traj: &Trajectory) -> SimulateSummary {
    SimulateSummary {
        algorithm: config.algorithm.kind.to_string(),
        n: traj.n(),
        t_end: config.experiment.t_end,
        snapshots: traj.len(),
        events: traj.stats.events,
        candidates: traj.stats.candidates,
        lambda_global: traj.stats.bound.as_ref().map(|b| b.lambda_global),
    }
}

fn simulate(config: &RunConfig) -> Result<Outcome> {
    let traj = simulate_path(config, "")?;
    let s = simulate_summary(config, &traj);
    write_json(config, &s)?;
    Ok(Outcome {
        summary: format!(
            "simulate: {} on n = {}, {} events, {} snapshots written to {}",
            s.algorithm,
            s.n,
            s.events,
            s.snapshots,
            config.io.out_dir.display()
        ),
        violations: 0,
    })
}

fn mean_field(config: &RunConfig) -> Result<Outcome> {
    let lattice = config.lattice.build()?;
    let (model, init) = config.model.spec()?.build(&lattice)?;
    let e = &config.experiment;
    let mf = solve_mean_field(&lattice, &model, &init, e.t_end, e.mean_field_dt)?;
    if config.io.wants(Format::Csv) {
        atomic_write(&config.io.out_dir.join("mean_field.csv"), |w| {
            write_mean_field_csv(w, &mf)
        })?;
    }
    let last = mf.voltage(mf.len() - 1);
    let (lo, hi) = last
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    write_json(
        config,
        &serde_json::json!({ "n": lattice.n(), "t_end": e.t_end, "steps": mf.len() - 1, "final_min": lo, "final_max": hi }),
    )?;
    Ok(Outcome {
        summary: format!(
            "mean-field: n = {}, {} steps, final U in [{lo:.6}, {hi:.6}]",
            lattice.n(),
            mf.len() - 1
        ),
        violations: 0,
    })
}

/// Rows from a complete or partially written records file; a torn last
/// line from an interrupted run is dropped.
fn load_records(path: &Path) -> Vec<ExperimentRecord> {
    let Ok(file) = fs::File::open(path) else {
        return Vec::new();
    };
    csv::Reader::from_reader(file)
        .deserialize()
        .filter_map(|r| r.ok())
        .collect()
}

#[derive(Serialize)]
struct SlopeRow {
    kind: &'static str,
    sample: Option<usize>,
    slope: f64,
    intercept: f64,
    residual: f64,
    points: usize,
}

#[derive(Serialize)]
struct PlotRow {
    figure: &'static str,
    series: String,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct BinRow {
    lo: f64,
    hi: f64,
    count: u64,
}

#[derive(Serialize)]
struct ConvergeSummary {
    runs: usize,
    failed: usize,
    resumed: usize,
    mean_slope: Option<f64>,
    mean_intercept: Option<f64>,
    /// Per-sample fits with error shrinking as `h` does (positive slope in `h`).
    decreasing_sample_trends: usize,
    sample_slopes: usize,
    swap_draws: usize,
    swap_mean: Option<f64>,
    swap_std: Option<f64>,
}

fn converge(config: &RunConfig, workers: usize, resumable: bool) -> Result<Outcome> {
    let out = &config.io.out_dir;
    let e = &config.experiment;
    let a = &config.algorithm;
    let cfg = ConvergenceConfig {
        model: config.model.spec()?,
        length: config.lattice.length,
        diffusivity: config.lattice.diffusivity,
        hs: e.h_inverse.iter().map(|&m| 1.0 / m as f64).collect(),
        samples: e.samples,
        t_end: e.t_end,
        algorithm: a.kind,
        step: a.step(),
        sim: a.sim(),
        mean_field_dt: e.mean_field_dt,
        p: e.p,
        seed: config.seed,
        workers,
    };
    let journal = out.join(JOURNAL);
    let done = if resumable {
        let mut rows = load_records(&out.join(RECORDS));
        if rows.is_empty() {
            rows = load_records(&journal);
        }
        rows.retain(|r| (r.run_id as usize) < cfg.run_count());
        rows
    } else {
        Vec::new()
    };
    if !resumable {
        let _ = fs::remove_file(&journal);
    } else if !done.is_empty() {
        log::info!(
            "resuming: {} of {} runs already recorded",
            done.len(),
            cfg.run_count()
        );
    }
    // journal: every finished row is appended and flushed immediately
    let fresh = !journal.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&journal)
        .with_context(|| format!("opening {}", journal.display()))?;
    let writer = Mutex::new(
        csv::WriterBuilder::new()
            .has_headers(fresh)
            .from_writer(file),
    );
    let on_record = |r: &ExperimentRecord| {
        let mut w = writer.lock().expect("journal lock");
        if let Err(err) = w
            .serialize(r)
            .and_then(|_| w.flush().map_err(csv::Error::from))
        {
            log::warn!("journal write failed: {err}");
        }
    };
    let records = convergence_study_with(&cfg, &done, &on_record)?;
    drop(writer);

    write_table(&out.join(RECORDS), &records)?;
    let _ = fs::remove_file(&journal);
    let failed = records.iter().filter(|r| !r.ok()).count();
    for r in records.iter().filter(|r| !r.ok()) {
        log::error!(
            "run_id {} (h = {}): {}",
            r.run_id,
            r.h,
            r.failure.as_deref().unwrap_or("no error value")
        );
    }

    let sizes = summarize(&records);
    let fit = mean_error_fit(&records).ok();
    let samples = per_sample_slopes(&records, e.samples);
    let (hs, columns) = error_columns(&records);
    let swaps = if hs.len() >= 2 && columns.iter().all(|c| !c.is_empty()) {
        swap_histogram(&hs, &columns, e.draws, config.seed).ok()
    } else {
        None
    };

    let mut slope_rows: Vec<SlopeRow> = Vec::new();
    if let Some(f) = fit {
        slope_rows.push(SlopeRow {
            kind: "mean",
            sample: None,
            slope: f.slope,
            intercept: f.intercept,
            residual: f.residual,
            points: f.points,
        });
    }
    for (s, f) in samples.iter().enumerate() {
        slope_rows.push(SlopeRow {
            kind: "sample",
            sample: Some(s),
            slope: f.slope,
            intercept: f.intercept,
            residual: f.residual,
            points: f.points,
        });
    }
    let mut plot: Vec<PlotRow> = Vec::new();
    for s in &sizes {
        plot.push(PlotRow {
            figure: "mean_error",
            series: "mean".into(),
            x: s.h,
            y: s.mean,
        });
        if let Some(f) = fit {
            plot.push(PlotRow {
                figure: "mean_error",
                series: "fit".into(),
                x: s.h,
                y: (f.intercept + f.slope * s.h.ln()).exp(),
            });
        }
    }
    for r in records.iter().filter(|r| r.ok()) {
        plot.push(PlotRow {
            figure: "sample_error",
            series: format!("sample_{}", r.run_id % e.samples as u64),
            x: r.h,
            y: r.error_v.unwrap_or(f64::NAN),
        });
    }
    let hist = swaps.as_ref().and_then(|v| histogram(v, e.bins).ok());
    if config.io.wants(Format::Csv) {
        write_table(&out.join("summary.csv"), &sizes)?;
        write_table(&out.join("slopes.csv"), &slope_rows)?;
        write_table(&out.join("plot.csv"), &plot)?;
        if let Some(h) = &hist {
            let bins: Vec<BinRow> = h
                .counts
                .iter()
                .enumerate()
                .map(|(i, &count)| BinRow {
                    lo: h.edges[i],
                    hi: h.edges[i + 1],
                    count,
                })
                .collect();
            write_table(&out.join("histogram.csv"), &bins)?;
        }
    }
    let (swap_mean, swap_std) = match &swaps {
        Some(v) if !v.is_empty() => {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64;
            (Some(m), Some(var.sqrt()))
        }
        _ => (None, None),
    };
    let summary = ConvergeSummary {
        runs: records.len(),
        failed,
        resumed: done.len(),
        mean_slope: fit.map(|f| f.slope),
        mean_intercept: fit.map(|f| f.intercept),
        decreasing_sample_trends: samples.iter().filter(|f| f.slope > 0.0).count(),
        sample_slopes: samples.len(),
        swap_draws: swaps.as_ref().map_or(0, Vec::len),
        swap_mean,
        swap_std,
    };
    write_json(config, &summary)?;
    let slope = fit.map_or("n/a".to_string(), |f| format!("{:.4}", f.slope));
    Ok(Outcome {
        summary: format!(
            "converge: {} rows written ({} resumed, {failed} failed), mean-error slope {slope}",
            records.len(),
            done.len()
        ),
        violations: failed,
    })
}

fn algo_error(config: &RunConfig, workers: usize) -> Result<Outcome> {
    let e = &config.experiment;
    let lattice = config.lattice.build()?;
    let cfg = AlgoErrorConfig {
        model: config.model.spec()?,
        length: lattice.length(),
        diffusivity: lattice.diffusivity(),
        h: lattice.h(),
        taus: e.taus.clone(),
        samples: e.samples,
        t_end: e.t_end,
        grid_points: e.grid_points,
        sim: config.algorithm.sim(),
        seed: config.seed,
        bootstrap: e.bootstrap,
        workers,
    };
    let rows = algorithmic_error(&cfg)?;
    if config.io.wants(Format::Csv) {
        write_table(&config.io.out_dir.join("algo_error.csv"), &rows)?;
    }
    write_json(config, &rows)?;
    let cells: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "tau {} -> {:.4} ± {:.4}",
                r.tau, r.estimate, r.standard_error
            )
        })
        .collect();
    Ok(Outcome {
        summary: format!(
            "algo-error: h = {}, {} rows written: {}",
            lattice.h(),
            rows.len(),
            cells.join(", ")
        ),
        violations: 0,
    })
}

#[derive(Serialize)]
struct CorrectorRow {
    n: usize,
    p: f64,
    #[serde(rename = "N")]
    window: usize,
    ceiling_l1: f64,
    observed_l1: f64,
    ceiling_diff: f64,
    observed_diff: f64,
    ceiling_jump: f64,
    observed_jump: f64,
    violations: usize,
}

fn corrector_check(config: &RunConfig) -> Result<Outcome> {
    let e = &config.experiment;
    let mut rows = Vec::new();
    for &n in &e.corrector_n {
        for &p in &e.corrector_p {
            let r = corrector_bound_report(n, p, e.corrector_trials, config.seed)
                .with_context(|| format!("corrector check at n = {n}, p = {p}"))?;
            rows.push(CorrectorRow {
                n,
                p,
                window: r.window,
                ceiling_l1: r.ceiling_l1,
                observed_l1: r.observed_l1,
                ceiling_diff: r.ceiling_diff,
                observed_diff: r.observed_diff,
                ceiling_jump: r.ceiling_jump,
                observed_jump: r.observed_jump,
                violations: r.violations,
            });
        }
    }
    if config.io.wants(Format::Csv) {
        write_table(&config.io.out_dir.join("corrector.csv"), &rows)?;
    }
    write_json(config, &rows)?;
    let violations = rows.iter().map(|r| r.violations).sum();
    Ok(Outcome {
        summary: format!(
            "corrector-check: {} rows written, {violations} violations",
            rows.len()
        ),
        violations,
    })
}

fn poisson_lln(config: &RunConfig) -> Result<Outcome> {
    let e = &config.experiment;
    let cfg = PoissonConfig {
        gamma: e.gamma,
        windows: (1..=e.windows).map(|i| i * i).collect(),
        t_end: e.t_end,
        clock_cap: e.clock_cap,
        clock: e.clock,
        trials: e.trials,
        seed: config.seed,
    };
    let report = poisson_lln_check(&cfg)?;
    if config.io.wants(Format::Csv) {
        write_table(&config.io.out_dir.join("poisson.csv"), &report.windows)?;
    }
    write_json(config, &report)?;
    let tail = report.tail_exceedances(3);
    let total: usize = report.windows.iter().map(|w| w.exceedances).sum();
    Ok(Outcome {
        summary: format!(
            "poisson-lln: {} windows written, {total} exceedances overall, {tail} at the three largest windows",
            report.windows.len()
        ),
        violations: tail,
    })
}

fn hh_demo(config: &RunConfig, workers: usize) -> Result<Outcome> {
    let e = &config.experiment;
    let clamp = ClampConfig {
        v: e.clamp_v,
        sites: e.clamp_sites,
        t_end: e.clamp_t_end,
        seed: config.seed,
        workers,
        ..ClampConfig::default()
    };
    let spec = config.model.spec()?;
    let report = hh_clamp_check_with(&clamp, &spec.params)?;
    if config.io.wants(Format::Csv) {
        write_table(
            &config.io.out_dir.join("clamp.csv"),
            std::slice::from_ref(&report),
        )?;
    }
    let traj = simulate_path(config, "hh_")?;
    let cable = simulate_summary(config, &traj);
    let peak = (0..traj.len())
        .flat_map(|i| traj.voltage(i).iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    write_json(
        config,
        &serde_json::json!({ "clamp": report, "cable": cable, "peak_voltage": peak }),
    )?;
    let within = report.within(3.0);
    Ok(Outcome {
        summary: format!(
            "hh-demo: clamp at {} mV: open fraction {:.5} vs m^3 h = {:.5} ({:+.2} SE); cable n = {}, {} events, peak {peak:.1} mV",
            report.v, report.fraction, report.product, report.z_score, cable.n, cable.events
        ),
        violations: usize::from(!within),
    })
}

/// `--out` beats the environment override, which beats the config file.
pub fn output_dir(flag: Option<PathBuf>, env: Option<PathBuf>, config: &Path) -> PathBuf {
    flag.or(env).unwrap_or_else(|| config.to_path_buf())
}
