use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::slopes::loglog_slope;
use crate::error::{Error, Result};
use crate::stoch::stream_rng;

/// Time changes `tau_k(t)` fed to the unit-rate processes, all capped at
/// `tau_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    /// `tau(t) = 0`.
    Frozen,
    /// `tau(t) = min(t, tau_T)`.
    #[default]
    Identity,
    /// `tau_k(t) = min(r_k t, tau_T)` with `r_k ~ U(1/2, 3/2)`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonConfig {
    pub gamma: f64,
    pub windows: Vec<usize>,
    /// Horizon `T` in real time.
    pub t_end: f64,
    /// Clock cap `tau_T`.
    pub clock_cap: f64,
    pub clock: ClockKind,
    pub trials: usize,
    pub seed: u64,
}

impl PoissonConfig {
    /// Windows `i^2` for `i = 1..=count`, identity clocks capped at 1.
    pub fn squares(count: usize, gamma: f64, trials: usize, seed: u64) -> Self {
        Self {
            gamma,
            windows: (1..=count).map(|i| i * i).collect(),
            t_end: 1.0,
            clock_cap: 1.0,
            clock: ClockKind::Identity,
            trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub n: usize,
    /// `6 gamma sqrt(n) log(n)`.
    pub threshold: f64,
    pub exceedances: usize,
    pub mean_sup: f64,
    pub max_sup: f64,
    /// Mean and standard error of the compensated sum at `T`.
    pub mean_final: f64,
    pub se_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonReport {
    pub gamma: f64,
    pub trials: usize,
    pub windows: Vec<WindowReport>,
}

impl PoissonReport {
    /// Exceedances summed over the `last` largest windows.
    pub fn tail_exceedances(&self, last: usize) -> usize {
        let mut w: Vec<&WindowReport> = self.windows.iter().collect();
        w.sort_by_key(|r| r.n);
        w.iter().rev().take(last).map(|r| r.exceedances).sum()
    }
}

/// `gamma > 0` and, for three or more windows, `sum n_i^{-gamma}` must
/// converge when the fitted growth `n_i ~ i^a` is continued: `gamma a > 1`.
fn check_admissible(gamma: f64, windows: &[usize]) -> Result<()> {
    let bad = |reason: String| Error::Parameter {
        name: "gamma".into(),
        reason,
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(bad(format!("must be positive, got {gamma}")));
    }
    if windows.is_empty() || windows.contains(&0) {
        return Err(Error::Parameter {
            name: "windows".into(),
            reason: "window sizes must be positive and non-empty".into(),
        });
    }
    if windows.len() >= 3 {
        let pts: Vec<(f64, f64)> = windows
            .iter()
            .enumerate()
            .map(|(i, &n)| ((i + 1) as f64, n as f64))
            .collect();
        let a = loglog_slope(&pts)?.slope;
        if gamma * a <= 1.0 {
            return Err(bad(format!(
                "sum of n_i^-gamma diverges: windows grow like i^{a:.3}, gamma * {a:.3} <= 1"
            )));
        }
    }
    Ok(())
}

/// `sup_{t <= T} |sum_k (N_k(tau_k(t)) - tau_k(t))|` over one draw of `n`
/// processes, evaluated at every jump and clock kink (the path is linear in
/// between), and the value at `T`.
fn one_trial<R: Rng>(n: usize, config: &PoissonConfig, rng: &mut R) -> Result<(f64, f64)> {
    if config.clock == ClockKind::Frozen {
        return Ok((0.0, 0.0));
    }
    let (t_end, cap) = (config.t_end, config.clock_cap);
    // jump times in real time, and clock kinks with the rate that switches off
    let mut jumps: Vec<f64> = Vec::new();
    let mut kinks: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut slope = 0.0;
    for _ in 0..n {
        let r = match config.clock {
            ClockKind::Random => rng.random_range(0.5..1.5),
            _ => 1.0,
        };
        slope += r;
        let reach = (r * t_end).min(cap);
        let count = if reach > 0.0 {
            Poisson::new(reach)
                .map_err(|e| Error::Data(e.to_string()))?
                .sample(rng) as usize
        } else {
            0
        };
        jumps.extend((0..count).map(|_| rng.random::<f64>() * reach / r));
        if cap / r < t_end {
            kinks.push((cap / r, r));
        }
    }
    jumps.sort_by(f64::total_cmp);
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (mut t, mut comp, mut count) = (0.0, 0.0, 0.0);
    let mut sup: f64 = 0.0;
    let (mut j, mut q) = (0, 0);
    loop {
        let next_jump = jumps.get(j).copied().unwrap_or(f64::INFINITY);
        let next_kink = kinks.get(q).map_or(f64::INFINITY, |k| k.0);
        let next = next_jump.min(next_kink).min(t_end);
        comp += slope * (next - t);
        t = next;
        sup = sup.max((count - comp).abs());
        if t >= t_end && next_jump > t_end && next_kink > t_end {
            break;
        }
        if next_kink <= next_jump {
            slope -= kinks[q].1;
            q += 1;
        } else {
            count += 1.0;
            j += 1;
            sup = sup.max((count - comp).abs());
        }
    }
    Ok((sup, count - comp))
}

/// Empirical check of the Poisson law-of-large-numbers bound: per window
/// size, the fraction of trials where the compensated sum exceeds
/// `6 gamma sqrt(n) log(n)`.
pub fn poisson_lln_check(config: &PoissonConfig) -> Result<PoissonReport> {
    check_admissible(config.gamma, &config.windows)?;
    if !(config.t_end > 0.0 && config.clock_cap >= 0.0) || config.trials == 0 {
        return Err(Error::Parameter {
            name: "T".into(),
            reason: "needs T > 0, a nonnegative clock cap and at least one trial".into(),
        });
    }
    let mut windows = Vec::with_capacity(config.windows.len());
    for (w, &n) in config.windows.iter().enumerate() {
        let threshold = 6.0 * config.gamma * (n as f64).sqrt() * (n as f64).ln();
        let mut rng = stream_rng(config.seed, w as u64);
        let (mut exceed, mut sum_sup, mut max_sup) = (0, 0.0, 0.0f64);
        let mut finals = Vec::with_capacity(config.trials);
        for _ in 0..config.trials {
            let (sup, last) = one_trial(n, config, &mut rng)?;
            if sup > threshold {
                exceed += 1;
            }
            sum_sup += sup;
            max_sup = max_sup.max(sup);
            finals.push(last);
        }
        let m = config.trials as f64;
        let mean = finals.iter().sum::<f64>() / m;
        let var = if config.trials > 1 {
            finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        windows.push(WindowReport {
            n,
            threshold,
            exceedances: exceed,
            mean_sup: sum_sup / m,
            max_sup,
            mean_final: mean,
            se_final: (var / m).sqrt(),
        });
    }
    Ok(PoissonReport {
        gamma: config.gamma,
        trials: config.trials,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_clock_has_zero_sup() {
        let mut c = PoissonConfig::squares(1, 2.0, 5, 1);
        c.clock = ClockKind::Frozen;
        let r = poisson_lln_check(&c).unwrap();
        assert_eq!(r.windows[0].max_sup, 0.0);
        assert_eq!(r.windows[0].exceedances, 0);
    }

    #[test]
    fn single_process_path_by_hand() {
        // one identity clock on [0, 1]
        let c = PoissonConfig::squares(1, 2.0, 1, 1);
        let mut rng = stream_rng(4, 0);
        for _ in 0..50 {
            let (sup, last) = one_trial(1, &c, &mut rng).unwrap();
            assert!(sup >= last.abs());
            // the count is last + 1 at T, and the path never exceeds count or T
            assert!(sup <= (last + 1.0).max(1.0) + 1e-12);
        }
    }

    #[test]
    fn compensated_sum_is_centred() {
        let mut c = PoissonConfig::squares(6, 2.0, 400, 2);
        c.clock = ClockKind::Random;
        c.t_end = 2.0;
        let r = poisson_lln_check(&c).unwrap();
        for w in &r.windows {
            assert!(w.mean_final.abs() <= 3.0 * w.se_final + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn admissibility() {
        let mut c = PoissonConfig::squares(10, 0.4, 1, 1);
        assert!(
            matches!(poisson_lln_check(&c), Err(Error::Parameter { name, .. }) if name == "gamma")
        );
        c.gamma = -1.0;
        assert!(poisson_lln_check(&c).is_err());
        c.gamma = 2.0;
        assert!(poisson_lln_check(&c).is_ok());
    }
}
