//! Heat kernel of the circle `[0, L)` and the semigroup `e^{tD Delta}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative cutoff for the image sum.
const IMAGE_CUTOFF: f64 = 1e-16;
/// Hard cap on image pairs; only reached for `Dt >> L^2`.
const MAX_IMAGES: usize = 100_000;

/// Density at `y` after time `t` of a Brownian motion on the circle with
/// variance `2D` per unit time started at `x`:
///
/// `(4 pi D t)^{-1/2} sum_k exp(-(y - x + kL)^2 / (4 D t))`.
///
/// Images are summed outward from the nearest one until a pair contributes
/// less than `1e-16` relative; `|k| <= 1` is always included. The result is
/// exactly symmetric in `x` and `y`.
pub fn heat_kernel(t: f64, x: f64, y: f64, diffusivity: f64, length: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Parameter {
            name: "t".into(),
            reason: format!("heat kernel needs t > 0, got {t}"),
        });
    }
    if !(diffusivity > 0.0) || !(length > 0.0) {
        return Err(Error::Parameter {
            name: "D, L".into(),
            reason: format!("need D > 0 and L > 0, got D = {diffusivity}, L = {length}"),
        });
    }
    let a = x.rem_euclid(length);
    let b = y.rem_euclid(length);
    let d = (a - b).abs();
    let r = d.min(length - d);
    Ok(kernel_at_distance(r, 4.0 * diffusivity * t, length))
}

/// Kernel as a function of the geodesic distance `r` in `[0, L/2]`.
fn kernel_at_distance(r: f64, four_dt: f64, length: f64) -> f64 {
    let mut sum = (-r * r / four_dt).exp();
    for k in 1..=MAX_IMAGES {
        let shift = k as f64 * length;
        let plus = (-(r + shift).powi(2) / four_dt).exp();
        let minus = (-(r - shift).powi(2) / four_dt).exp();
        sum += plus + minus;
        if plus + minus < IMAGE_CUTOFF * sum {
            break;
        }
    }
    sum / (PI * four_dt).sqrt()
}

/// Applies `e^{tD Delta}` to samples `f(x_m)`, `x_m = m L / M`, by periodic
/// quadrature against the heat kernel. `t = 0` is the identity.
///
/// The discrete kernel is normalized to unit mass, so constants are fixed
/// exactly even when the kernel is under-resolved.
pub fn apply_heat_semigroup(
    samples: &[f64],
    t: f64,
    diffusivity: f64,
    length: f64,
) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::Parameter {
            name: "t".into(),
            reason: format!("semigroup time must be nonnegative, got {t}"),
        });
    }
    let m = samples.len();
    if t == 0.0 || m == 0 || diffusivity == 0.0 {
        return Ok(samples.to_vec());
    }
    let dx = length / m as f64;
    let mut row: Vec<f64> = (0..m)
        .map(|j| heat_kernel(t, 0.0, j as f64 * dx, diffusivity, length))
        .collect::<Result<_>>()?;
    let mass: f64 = row.iter().sum::<f64>() * dx;
    for w in &mut row {
        *w *= dx / mass;
    }
    let out = (0..m)
        .map(|a| {
            let mut acc = 0.0;
            for (b, &f) in samples.iter().enumerate() {
                let offset = if b >= a { b - a } else { b + m - a };
                acc += row[offset] * f;
            }
            acc
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct image sum over `|k| <= 100`, no reduction of `y - x`.
    fn brute_force(t: f64, x: f64, y: f64, d: f64, l: f64) -> f64 {
        let s: f64 = (-100..=100)
            .map(|k| (-(y - x + k as f64 * l).powi(2) / (4.0 * d * t)).exp())
            .sum();
        s / (4.0 * PI * d * t).sqrt()
    }

    #[test]
    fn matches_brute_force_image_sum() {
        let v = heat_kernel(0.01, 0.3, 0.3, 1.0, 1.0).unwrap();
        assert!((v - brute_force(0.01, 0.3, 0.3, 1.0, 1.0)).abs() < 1e-12);
        for &(t, x, y, d, l) in &[
            (0.2, 0.1, 0.9, 1.0, 1.0),
            (3.0, 1.0, 14.0, 2.0, 16.0),
            (0.05, -2.0, 7.3, 0.5, 4.0),
        ] {
            let a = heat_kernel(t, x, y, d, l).unwrap();
            let b = brute_force(t, x, y, d, l);
            assert!((a - b).abs() < 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn normalized_and_symmetric() {
        let (d, l) = (1.3, 2.0);
        for &t in &[0.01, 0.1, 1.0] {
            let m = 4096;
            let dx = l / m as f64;
            let total: f64 = (0..m)
                .map(|j| heat_kernel(t, 0.37, j as f64 * dx, d, l).unwrap())
                .sum::<f64>()
                * dx;
            assert!((total - 1.0).abs() < 1e-10, "t = {t}: {total}");
        }
        for &(x, y) in &[(0.1, 1.7), (0.0, 1.0), (-0.3, 5.9), (1.999, 0.001)] {
            assert_eq!(
                heat_kernel(0.03, x, y, d, l).unwrap(),
                heat_kernel(0.03, y, x, d, l).unwrap()
            );
        }
        assert!(heat_kernel(0.0, 0.0, 0.0, d, l).is_err());
    }

    fn sine(m: usize) -> Vec<f64> {
        (0..m)
            .map(|j| (2.0 * PI * j as f64 / m as f64).sin())
            .collect()
    }

    #[test]
    fn sine_mode_decays_at_the_analytic_rate() {
        let f = sine(1024);
        let out = apply_heat_semigroup(&f, 0.05, 1.0, 1.0).unwrap();
        let factor = (-4.0 * PI * PI * 0.05f64).exp();
        for (o, x) in out.iter().zip(&f) {
            assert!((o - factor * x).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_and_constants() {
        let f = sine(64);
        assert_eq!(apply_heat_semigroup(&f, 0.0, 1.0, 1.0).unwrap(), f);
        let c = vec![2.5; 128];
        for o in apply_heat_semigroup(&c, 0.3, 0.7, 3.0).unwrap() {
            assert!((o - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_property() {
        let m = 512;
        let l = 2.0;
        let f: Vec<f64> = (0..m)
            .map(|j| {
                let x = j as f64 * l / m as f64;
                (-(x - 1.0).powi(2) * 8.0).exp() + 0.3 * (2.0 * PI * x / l).cos()
            })
            .collect();
        let once = apply_heat_semigroup(&f, 0.05, 1.0, l).unwrap();
        let twice = apply_heat_semigroup(
            &apply_heat_semigroup(&f, 0.02, 1.0, l).unwrap(),
            0.03,
            1.0,
            l,
        )
        .unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
