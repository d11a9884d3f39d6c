//! The discrete corrector `chi` solving `D Delta chi = Zbar - Z` on the circle
//! (plain second difference, mean zero), assembled from the Green's profile
//! of the window average.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{lattice_window, local_average_with, LocalAverage};
use crate::error::{Error, Result};
use crate::lattice::CircleLattice;
use crate::stoch::stream_rng;

/// Below this many sites the direct `O(nN)` convolution is used.
pub const DIRECT_BELOW: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

fn triangular(r: usize) -> f64 {
    (r * (r + 1) / 2) as f64
}

fn check_window(window: usize, n: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::EvenWindow(window));
    }
    if window > n {
        return Err(Error::Parameter {
            name: "N".into(),
            reason: format!("window {window} exceeds {n} compartments"),
        });
    }
    Ok(())
}

/// Profile `nu_0[d] = -T(M - |d|) / N` (`T(r) = r(r+1)/2`, zero for
/// `|d| >= M`), indexed by the offset `d mod n`. Its second difference is
/// `(N-1)/N` at 0, `-1/N` for `1 <= |d| <= M` and 0 elsewhere: the point mass
/// minus the window average.
pub fn corrector_profile(window: usize, n: usize) -> Result<Vec<f64>> {
    check_window(window, n)?;
    let m = (window - 1) / 2;
    let inv = 1.0 / window as f64;
    let mut nu = vec![0.0; n];
    nu[0] = -triangular(m) * inv;
    for d in 1..m {
        let w = -triangular(m - d) * inv;
        nu[d] += w;
        nu[n - d] += w;
    }
    Ok(nu)
}

struct Spectrum {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    profile: Vec<Complex<f64>>,
}

type SpectrumCache = RwLock<HashMap<(usize, usize), Arc<Spectrum>>>;

fn spectrum(window: usize, n: usize) -> Result<Arc<Spectrum>> {
    static CACHE: OnceLock<SpectrumCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache
        .read()
        .expect("spectrum cache poisoned")
        .get(&(n, window))
    {
        return Ok(s.clone());
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut profile: Vec<Complex<f64>> = corrector_profile(window, n)?
        .into_iter()
        .map(|x| Complex::new(x, 0.0))
        .collect();
    forward.process(&mut profile);
    let s = Arc::new(Spectrum {
        forward,
        inverse,
        profile,
    });
    cache
        .write()
        .expect("spectrum cache poisoned")
        .insert((n, window), s.clone());
    Ok(s)
}

/// Mean-zero corrector, `n x slices` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorField {
    pub window: usize,
    pub slices: usize,
    pub diffusivity: f64,
    pub chi: Vec<f64>,
}

impl CorrectorField {
    pub fn n(&self) -> usize {
        self.chi.len() / self.slices
    }

    #[inline]
    pub fn value(&self, k: usize, s: usize) -> f64 {
        self.chi[k * self.slices + s]
    }

    pub fn max_abs(&self) -> f64 {
        self.chi.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `max |chi[k+1] - chi[k]|` over sites and slices.
    pub fn max_difference(&self) -> f64 {
        let n = self.n();
        let mut best: f64 = 0.0;
        for k in 0..n {
            let next = (k + 1) % n;
            for s in 0..self.slices {
                best = best.max((self.value(next, s) - self.value(k, s)).abs());
            }
        }
        best
    }

    /// `D Delta chi` at site `k` of slice `s`, for residual checks.
    pub fn apply_operator(&self, k: usize, s: usize) -> f64 {
        let n = self.n();
        let l = (k + n - 1) % n;
        let r = (k + 1) % n;
        self.diffusivity * (self.value(l, s) - 2.0 * self.value(k, s) + self.value(r, s))
    }
}

/// Corrector for an averaged field, method chosen by size.
pub fn solve_corrector(average: &LocalAverage, lattice: &CircleLattice) -> Result<CorrectorField> {
    solve_corrector_with(
        &average.field,
        &average.values,
        average.slices,
        average.window(),
        lattice,
        ConvolutionMethod::Auto,
    )
}

/// Solves `D Delta chi = zbar - z` with mean-zero `chi`, where `zbar` must be
/// the `window`-average of `z`. Errors if a slice of `zbar - z` does not sum
/// to zero.
pub fn solve_corrector_with(
    z: &[f64],
    zbar: &[f64],
    slices: usize,
    window: usize,
    lattice: &CircleLattice,
    method: ConvolutionMethod,
) -> Result<CorrectorField> {
    let n = lattice.n();
    if slices == 0 || z.len() != n * slices || zbar.len() != z.len() {
        return Err(Error::Dimension(format!(
            "corrector input has {} / {} entries, expected {n} x {slices}",
            z.len(),
            zbar.len()
        )));
    }
    check_window(window, n)?;
    let d = lattice.diffusivity();
    if d <= 0.0 {
        return Err(Error::Parameter {
            name: "D".into(),
            reason: "the corrector needs a positive diffusivity".into(),
        });
    }
    for s in 0..slices {
        let (mut sum, mut scale) = (0.0, 1.0);
        for k in 0..n {
            sum += zbar[k * slices + s] - z[k * slices + s];
            scale += z[k * slices + s].abs();
        }
        if sum.abs() > 1e-9 * scale {
            return Err(Error::Inconsistent { slice: s, sum });
        }
    }

    let method = match method {
        ConvolutionMethod::Auto if n < DIRECT_BELOW => ConvolutionMethod::Direct,
        ConvolutionMethod::Auto => ConvolutionMethod::Fft,
        m => m,
    };
    let mut chi = vec![0.0; n * slices];
    let mut column = vec![0.0; n];
    let mut out = vec![0.0; n];
    for s in 0..slices {
        for k in 0..n {
            column[k] = z[k * slices + s];
        }
        match method {
            ConvolutionMethod::Fft => convolve_fft(&column, window, &mut out)?,
            _ => convolve_direct(&column, window, &mut out),
        }
        // chi = -(1/D) (nu * z), then remove the mean
        let mean = out.iter().sum::<f64>() / n as f64;
        for k in 0..n {
            chi[k * slices + s] = -(out[k] - mean) / d;
        }
    }
    Ok(CorrectorField {
        window,
        slices,
        diffusivity: d,
        chi,
    })
}

/// `out[k] = sum_m z[m] nu_0[k - m]` using the support `|d| < M`.
fn convolve_direct(z: &[f64], window: usize, out: &mut [f64]) {
    let n = z.len();
    let m = (window - 1) / 2;
    let inv = 1.0 / window as f64;
    let weights: Vec<f64> = (0..m).map(|d| -triangular(m - d) * inv).collect();
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = weights.first().map_or(0.0, |w| w * z[k]);
        for (d, w) in weights.iter().enumerate().skip(1) {
            acc += w * (z[(k + d) % n] + z[(k + n - d) % n]);
        }
        *o = acc;
    }
}

fn convolve_fft(z: &[f64], window: usize, out: &mut [f64]) -> Result<()> {
    let n = z.len();
    let spec = spectrum(window, n)?;
    let mut buf: Vec<Complex<f64>> = z.iter().map(|&x| Complex::new(x, 0.0)).collect();
    spec.forward.process(&mut buf);
    for (b, p) in buf.iter_mut().zip(&spec.profile) {
        *b *= p;
    }
    spec.inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (o, b) in out.iter_mut().zip(&buf) {
        *o = b.re * scale;
    }
    Ok(())
}

/// Observed corrector sizes over random 0/1 fields against the ceilings
/// `(N^2-1)/24` (sup), `(N^2-1)/(4N)` (neighbour difference) and
/// `(N^2-1)/(8N)` (change under one flip), all for `D = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub p: Option<f64>,
    pub window: usize,
    pub trials: usize,
    pub ceiling_l1: f64,
    pub observed_l1: f64,
    pub ceiling_diff: f64,
    pub observed_diff: f64,
    pub ceiling_jump: f64,
    pub observed_jump: f64,
    pub violations: usize,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// [`corrector_bound_report_for_window`] with `N` from `p` on a unit circle of
/// `n` sites (clamped to fit).
pub fn corrector_bound_report(n: usize, p: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    let lattice = CircleLattice::new(n, 1.0, 1.0)?;
    let window = lattice_window(&lattice, p)?;
    let mut report = corrector_bound_report_for_window(n, window, trials, seed)?;
    report.p = Some(p);
    Ok(report)
}

/// Random search for the corrector ceilings on `n` sites with window `N`.
/// The first trial is the block of `N - 2` ones that saturates the sup
/// ceiling before centring; the rest are Bernoulli fields of random density.
pub fn corrector_bound_report_for_window(
    n: usize,
    window: usize,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    let lattice = CircleLattice::new(n, 1.0, 1.0)?;
    check_window(window, n)?;
    let nn = window as f64;
    let ceiling_l1 = (nn * nn - 1.0) / 24.0;
    let ceiling_diff = (nn * nn - 1.0) / (4.0 * nn);
    let ceiling_jump = (nn * nn - 1.0) / (8.0 * nn);
    let exceeds = |observed: f64, ceiling: f64| observed > ceiling * (1.0 + 1e-12) + 1e-12;

    let mut rng = stream_rng(seed, 0);
    let mut report = BoundReport {
        n,
        p: None,
        window,
        trials,
        ceiling_l1,
        observed_l1: 0.0,
        ceiling_diff,
        observed_diff: 0.0,
        ceiling_jump,
        observed_jump: 0.0,
        violations: 0,
    };
    let solve = |z: &[f64]| -> Result<CorrectorField> {
        let avg = local_average_with(z, 1, &lattice, window)?;
        solve_corrector(&avg, &lattice)
    };
    for trial in 0..trials {
        let mut z: Vec<f64> = if trial == 0 {
            (0..n).map(|k| (k + 2 <= window) as u8 as f64).collect()
        } else {
            let density: f64 = rng.random();
            (0..n)
                .map(|_| (rng.random::<f64>() < density) as u8 as f64)
                .collect()
        };
        let chi = solve(&z)?;
        let flip = rng.random_range(0..n);
        z[flip] = 1.0 - z[flip];
        let flipped = solve(&z)?;
        let sup = chi.max_abs();
        let diff = chi.max_difference();
        let jump = chi
            .chi
            .iter()
            .zip(&flipped.chi)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if exceeds(sup, ceiling_l1) || exceeds(diff, ceiling_diff) || exceeds(jump, ceiling_jump) {
            report.violations += 1;
        }
        report.observed_l1 = report.observed_l1.max(sup);
        report.observed_diff = report.observed_diff.max(diff);
        report.observed_jump = report.observed_jump.max(jump);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `nu_0` straight from the triple sum over `j <= M` and `l, i <= j`.
    fn triple_sum_profile(window: usize, n: usize) -> Vec<f64> {
        let m = (window - 1) / 2;
        let mut nu = vec![0.0; n];
        for j in 1..=m {
            for l in 1..=j {
                for i in 1..=j {
                    let d = (l as isize - i as isize).rem_euclid(n as isize) as usize;
                    nu[d] -= 1.0 / window as f64;
                }
            }
        }
        nu
    }

    /// Mean-zero solution of `Delta x = rhs` by dense elimination, with the
    /// last equation replaced by `sum x = 0`.
    #[allow(clippy::needless_range_loop)]
    fn dense_poisson(rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for k in 0..n {
            if k == n - 1 {
                a[k][..n].iter_mut().for_each(|x| *x = 1.0);
                a[k][n] = 0.0;
                continue;
            }
            a[k][k] -= 2.0;
            a[k][(k + 1) % n] += 1.0;
            a[k][(k + n - 1) % n] += 1.0;
            a[k][n] = rhs[k];
        }
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, piv);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for j in c..=n {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        (0..n).map(|k| a[k][n] / a[k][k]).collect()
    }

    #[test]
    fn profile_matches_the_triple_sum() {
        for (window, n) in [(1, 1), (3, 5), (7, 7), (7, 64), (9, 20), (17, 40)] {
            let closed = corrector_profile(window, n).unwrap();
            let brute = triple_sum_profile(window, n);
            for (a, b) in closed.iter().zip(&brute) {
                assert!((a - b).abs() < 1e-13, "N = {window}, n = {n}");
            }
        }
    }

    #[test]
    fn profile_solves_the_point_mass_problem() {
        for (window, n) in [(3, 3), (5, 8), (7, 7), (9, 31)] {
            let nu = corrector_profile(window, n).unwrap();
            let m = (window - 1) / 2;
            for k in 0..n {
                let lap = nu[(k + 1) % n] - 2.0 * nu[k] + nu[(k + n - 1) % n];
                let d = k.min(n - k);
                let want = if d == 0 {
                    (window as f64 - 1.0) / window as f64
                } else if d <= m {
                    -1.0 / window as f64
                } else {
                    0.0
                };
                assert!((lap - want).abs() < 1e-13);
            }
            // l1 norm and sup
            let nn = window as f64;
            let l1: f64 = nu.iter().map(|x| x.abs()).sum();
            assert!((l1 - (nn * nn - 1.0) / 24.0).abs() < 1e-12);
            let sup = nu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!((sup - (nn * nn - 1.0) / (8.0 * nn)).abs() < 1e-12);
        }
    }

    #[test]
    fn corrector_matches_dense_solve() {
        let lat = CircleLattice::new(23, 1.0, 0.5).unwrap();
        let z: Vec<f64> = (0..23).map(|k| ((k * k) % 5 < 2) as u8 as f64).collect();
        let avg = local_average_with(&z, 1, &lat, 5).unwrap();
        let chi = solve_corrector(&avg, &lat).unwrap();
        let rhs: Vec<f64> = (0..23).map(|k| (avg.values[k] - z[k]) / 0.5).collect();
        let want = dense_poisson(&rhs);
        for k in 0..23 {
            assert!((chi.value(k, 0) - want[k]).abs() < 1e-11);
            assert!((chi.apply_operator(k, 0) - (avg.values[k] - z[k])).abs() < 1e-12);
        }
        assert!(chi.chi.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn fft_agrees_with_direct() {
        let lat = CircleLattice::new(300, 1.0, 1.0).unwrap();
        let mut rng = stream_rng(3, 1);
        let z: Vec<f64> = (0..600)
            .map(|_| (rng.random::<f64>() < 0.3) as u8 as f64)
            .collect();
        let avg = local_average_with(&z, 2, &lat, 21).unwrap();
        let a =
            solve_corrector_with(&z, &avg.values, 2, 21, &lat, ConvolutionMethod::Direct).unwrap();
        let b = solve_corrector_with(&z, &avg.values, 2, 21, &lat, ConvolutionMethod::Fft).unwrap();
        for (x, y) in a.chi.iter().zip(&b.chi) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn inconsistent_right_hand_side_is_rejected() {
        let lat = CircleLattice::new(8, 1.0, 1.0).unwrap();
        let z = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let zbar = vec![0.5; 8];
        let err = solve_corrector_with(&z, &zbar, 1, 3, &lat, ConvolutionMethod::Auto).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { slice: 0, .. }));
        assert!(matches!(
            solve_corrector_with(&z, &z, 1, 4, &lat, ConvolutionMethod::Auto),
            Err(Error::EvenWindow(4))
        ));
    }

    #[test]
    fn bound_report_for_seven_site_window() {
        let r = corrector_bound_report_for_window(64, 7, 200, 1).unwrap();
        assert!((r.ceiling_l1 - 2.0).abs() < 1e-15);
        assert!((r.ceiling_diff - 12.0 / 7.0).abs() < 1e-15);
        assert!((r.ceiling_jump - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(r.violations, 0);
        assert!(r.observed_l1 > 0.0 && r.observed_jump > 0.0);
    }
}
