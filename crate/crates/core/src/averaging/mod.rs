//! Local spatial averages of the occupancy and the discrete corrector.
//!
//! The averaging window covers the `N = 2 floor(h^{p-1} / 2) + 1` compartments
//! nearest to a site. Its smooth version `Phi_{h,p}` equals 1 within `M h` of
//! the centre (`M = (N - 1) / 2`), ramps down smoothly over the next `h` and
//! vanishes beyond, so on lattice points it is exactly the window indicator.

mod corrector;

pub use corrector::{
    corrector_bound_report, corrector_bound_report_for_window, corrector_profile, solve_corrector,
    solve_corrector_with, BoundReport, ConvolutionMethod, CorrectorField, DIRECT_BELOW,
};

use crate::error::{Error, Result};
use crate::lattice::CircleLattice;

/// `N = 2 floor(h^{p-1} / 2) + 1`; the floor tolerates a relative rounding
/// error of `1e-12` so that exact powers land on the intended integer.
pub fn window_size(h: f64, p: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter {
            name: "h".into(),
            reason: format!("must be positive, got {h}"),
        });
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter {
            name: "p".into(),
            reason: format!("must lie in [0, 1), got {p}"),
        });
    }
    let half = h.powf(p - 1.0) / 2.0;
    Ok(2 * (half * (1.0 + 1e-12)).floor() as usize + 1)
}

/// Window size on a lattice of `n` sites: [`window_size`], reduced to the
/// largest odd number not exceeding `n` if it does not fit on the circle.
pub fn lattice_window(lattice: &CircleLattice, p: f64) -> Result<usize> {
    let n_window = window_size(lattice.h(), p)?;
    let n = lattice.n();
    if n_window > n {
        let clamped = if n % 2 == 1 { n } else { n - 1 };
        log::warn!("averaging window {n_window} exceeds the {n} compartments; using {clamped}");
        return Ok(clamped);
    }
    Ok(n_window)
}

/// Smooth ramp on `[0, h]`: `e^{-h/y} / (e^{-h/(h-y)} + e^{-h/y})`, equal to 0
/// for `y <= 0` and 1 for `y >= h`; every derivative is `O(h^{-k})`.
pub fn ramp(h: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= h {
        return 1.0;
    }
    let a = (-h / y).exp();
    let b = (-h / (h - y)).exp();
    a / (a + b)
}

/// The bump `Phi_{h,p}` with a given half-width `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpKernel {
    pub h: f64,
    /// Odd window size `N = 2M + 1`.
    pub window: usize,
}

impl BumpKernel {
    pub fn new(h: f64, p: f64) -> Result<Self> {
        Ok(Self {
            h,
            window: window_size(h, p)?,
        })
    }

    /// Kernel for a lattice, with the window clamped to fit.
    pub fn for_lattice(lattice: &CircleLattice, p: f64) -> Result<Self> {
        Ok(Self {
            h: lattice.h(),
            window: lattice_window(lattice, p)?,
        })
    }

    pub fn half_width(&self) -> usize {
        (self.window - 1) / 2
    }

    /// `Phi` at signed distance `d` from the centre.
    pub fn eval(&self, d: f64) -> f64 {
        let m = self.half_width() as f64;
        let d = d.abs();
        if d <= m * self.h {
            1.0
        } else {
            ramp(self.h, (m + 1.0) * self.h - d)
        }
    }
}

/// `Phi_{h,p}(x)` for a point `x` given as its distance from the centre.
pub fn bump_eval(h: f64, p: f64, x: f64) -> Result<f64> {
    Ok(BumpKernel::new(h, p)?.eval(x))
}

/// Window averages of a field with `slices` components per site.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAverage {
    pub kernel: BumpKernel,
    pub slices: usize,
    length: f64,
    /// The averaged field, `n x slices` row-major.
    pub field: Vec<f64>,
    /// `Zbar`, same layout.
    pub values: Vec<f64>,
}

impl LocalAverage {
    pub fn n(&self) -> usize {
        self.field.len() / self.slices
    }

    pub fn window(&self) -> usize {
        self.kernel.window
    }

    #[inline]
    pub fn value(&self, k: usize, s: usize) -> f64 {
        self.values[k * self.slices + s]
    }

    /// Smooth interpolant `zbar(x) = (1/N) sum_k Phi(x - hk) Z[k]` of slice `s`
    /// at any point of the circle; equals [`value`](Self::value) on sites.
    pub fn smooth(&self, x: f64, s: usize) -> f64 {
        let n = self.n();
        let h = self.kernel.h;
        let reach = self.kernel.half_width() + 1;
        let centre = (x.rem_euclid(self.length) / h).floor() as isize;
        let mut acc = 0.0;
        // sites within (M + 1) h of x, each counted once
        let lo = centre - reach as isize;
        let hi = centre + reach as isize + 1;
        let span = ((hi - lo + 1) as usize).min(n);
        for offset in 0..span {
            let k = (lo + offset as isize).rem_euclid(n as isize) as usize;
            let mut d = (x - h * k as f64).rem_euclid(self.length);
            d = d.min(self.length - d);
            let w = self.kernel.eval(d);
            if w > 0.0 {
                acc += w * self.field[k * self.slices + s];
            }
        }
        acc / self.kernel.window as f64
    }
}

/// Window average of `field` (`n x slices` row-major) over the `N` nearest
/// compartments of every site, `N` from `p` and the lattice spacing.
pub fn local_average(
    field: &[f64],
    slices: usize,
    lattice: &CircleLattice,
    p: f64,
) -> Result<LocalAverage> {
    let kernel = BumpKernel::for_lattice(lattice, p)?;
    local_average_with(field, slices, lattice, kernel.window)
}

/// [`local_average`] with an explicit odd window `N <= n`.
pub fn local_average_with(
    field: &[f64],
    slices: usize,
    lattice: &CircleLattice,
    window: usize,
) -> Result<LocalAverage> {
    let n = lattice.n();
    if slices == 0 || field.len() != n * slices {
        return Err(Error::Dimension(format!(
            "field has {} entries, expected {n} x {slices}",
            field.len()
        )));
    }
    if window.is_multiple_of(2) {
        return Err(Error::EvenWindow(window));
    }
    if window > n {
        return Err(Error::Parameter {
            name: "N".into(),
            reason: format!("window {window} exceeds {n} compartments"),
        });
    }
    let m = (window - 1) / 2;
    let inv = 1.0 / window as f64;
    let mut values = vec![0.0; n * slices];
    for s in 0..slices {
        // running window sum around the circle
        let mut sum: f64 = (0..window)
            .map(|o| field[((n + o - m) % n) * slices + s])
            .sum();
        for k in 0..n {
            values[k * slices + s] = sum * inv;
            let leaving = (k + n - m) % n;
            let entering = (k + m + 1) % n;
            sum += field[entering * slices + s] - field[leaving * slices + s];
        }
        // re-sum periodically in long loops would be needed only for huge n;
        // the inputs are 0/1 or probabilities so drift stays at rounding level
    }
    Ok(LocalAverage {
        kernel: BumpKernel {
            h: lattice.h(),
            window,
        },
        slices,
        length: lattice.length(),
        field: field.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sizes() {
        assert_eq!(window_size(0.05, 1.0 / 3.0).unwrap(), 7);
        assert_eq!(window_size(1.0 / 64.0, 0.5).unwrap(), 9);
        assert_eq!(window_size(1.0 / 64.0, 1.0 / 3.0).unwrap(), 17);
        assert_eq!(window_size(1.0 / 7.0, 0.0).unwrap(), 7);
        assert_eq!(window_size(0.5, 0.9).unwrap(), 1);
        assert!(window_size(0.1, 1.0).is_err());
        assert!(window_size(0.0, 0.5).is_err());
    }

    #[test]
    fn oversized_window_is_clamped() {
        let lat = CircleLattice::new(16, 1.0, 1.0).unwrap();
        assert_eq!(lattice_window(&lat, 0.0).unwrap(), 15);
        let lat = CircleLattice::new(7, 1.0, 1.0).unwrap();
        assert_eq!(lattice_window(&lat, 0.0).unwrap(), 7);
    }

    #[test]
    fn bump_plateaus_and_lattice_indicator() {
        let (h, p) = (0.05, 1.0 / 3.0);
        assert_eq!(bump_eval(h, p, 0.0).unwrap(), 1.0);
        let k = BumpKernel::new(h, p).unwrap();
        assert_eq!(k.half_width(), 3);
        assert_eq!(k.eval(0.15), 1.0);
        assert_eq!(k.eval(0.2), 0.0);
        let mid = k.eval(0.175);
        assert!((mid - 0.5).abs() < 1e-12);
        let mut last = 1.0;
        for s in 0..=100 {
            let v = k.eval(0.15 + 0.05 * s as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v) && v <= last);
            last = v;
        }
        // n = 20 lattice points: exact indicator with N ones
        let lat = CircleLattice::new(20, 1.0, 1.0).unwrap();
        let k = BumpKernel::for_lattice(&lat, 1.0 / 3.0).unwrap();
        let vals: Vec<f64> = (0..20)
            .map(|j| {
                let d = lat.position(j).min(1.0 - lat.position(j));
                k.eval(d)
            })
            .collect();
        assert!(vals.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(vals.iter().sum::<f64>(), k.window as f64);
    }

    #[test]
    fn ramp_is_continuous_at_the_ends() {
        let h = 0.1;
        assert!(ramp(h, 1e-4) < 1e-100);
        assert!(1.0 - ramp(h, h - 1e-4) < 1e-100);
    }

    #[test]
    fn constants_and_full_circle_windows() {
        let lat = CircleLattice::new(7, 1.0, 1.0).unwrap();
        let field: Vec<f64> = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0].to_vec();
        let avg = local_average(&field, 1, &lat, 0.0).unwrap();
        assert_eq!(avg.window(), 7);
        for k in 0..7 {
            assert!((avg.value(k, 0) - 4.0 / 7.0).abs() < 1e-15);
        }
        let ones = vec![1.0; 14];
        let avg = local_average(&ones, 2, &lat, 0.5).unwrap();
        assert!(avg.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn smooth_interpolant_matches_sites() {
        let lat = CircleLattice::new(40, 2.0, 1.0).unwrap();
        let field: Vec<f64> = (0..40).map(|k| ((k * 7) % 3 == 0) as u8 as f64).collect();
        let avg = local_average(&field, 1, &lat, 0.5).unwrap();
        for k in 0..40 {
            assert!((avg.smooth(lat.position(k), 0) - avg.value(k, 0)).abs() < 1e-14);
        }
        // and stays in [0, 1] in between
        for s in 0..400 {
            let z = avg.smooth(s as f64 * 0.005, 0);
            assert!((0.0..=1.0 + 1e-12).contains(&z));
        }
    }
}
