//! Convergence experiments: error metrics against the mean field, h-sweeps
//! with Monte-Carlo replication, log-log slope fits with swap resampling, the
//! PET-vs-IL algorithmic error, an empirical Poisson law-of-large-numbers
//! bound and a clamped-voltage Hodgkin-Huxley check.

mod algo;
mod clamp;
mod convergence;
mod metrics;
mod poisson;
mod slopes;

pub use algo::{
    algorithmic_error, compare_site_means, site_runs, AlgoErrorConfig, AlgoErrorEstimate,
    SiteSampler,
};
pub use clamp::{
    hh_clamp_check, hh_clamp_check_with, stationary_distribution, ClampConfig, ClampReport,
};
pub use convergence::{
    convergence_study, convergence_study_resume, convergence_study_with, error_columns,
    mean_error_fit, per_sample_slopes, summarize, ConvergenceConfig, ExperimentRecord, ModelSpec,
    SizeSummary,
};
pub use metrics::{sup_error, SupError};
pub use poisson::{poisson_lln_check, ClockKind, PoissonConfig, PoissonReport, WindowReport};
pub use slopes::{histogram, loglog_slope, swap_histogram, swap_resample, Histogram, SlopeFit};

use crate::error::{Error, Result};

/// Runs `f` on a pool of `workers` threads (0 = one per core).
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter {
            name: "workers".into(),
            reason: e.to_string(),
        })?;
    Ok(pool.install(f))
}
