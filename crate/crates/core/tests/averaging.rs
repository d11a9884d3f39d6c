use pdmp_core::averaging::{
    corrector_bound_report, corrector_bound_report_for_window, corrector_profile, local_average,
    local_average_with, solve_corrector, solve_corrector_with, ConvolutionMethod,
};
use pdmp_core::CircleLattice;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bernoulli_field(n: usize, p: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 })
        .collect()
}

#[test]
fn window_average_matches_direct_summation() {
    let n = 64;
    let lat = CircleLattice::new(n, 1.0, 1.0).unwrap();
    // one-hot over 3 configurations, flattened k-major
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut z = vec![0.0; n * 3];
    for k in 0..n {
        z[k * 3 + rng.random_range(0..3)] = 1.0;
    }
    let avg = local_average(&z, 3, &lat, 0.5).unwrap();
    let window = avg.window();
    assert_eq!(window, 9);
    let m = (window / 2) as isize;
    for k in 0..n {
        for s in 0..3 {
            let direct: f64 =
                (-m..=m).map(|o| z[lat.shift(k, o) * 3 + s]).sum::<f64>() / window as f64;
            assert!((avg.value(k, s) - direct).abs() < 1e-14);
            assert!((avg.smooth(lat.position(k), s) - direct).abs() < 1e-14);
        }
        let total: f64 = (0..3).map(|s| avg.value(k, s)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }
}

/// Corrector of a point mass at `m`: minus the column `nu_m`, centred.
fn point_mass_corrector(n: usize, window: usize, m: usize) -> Vec<f64> {
    let lat = CircleLattice::new(n, 1.0, 1.0).unwrap();
    let mut z = vec![0.0; n];
    z[m] = 1.0;
    let avg = local_average_with(&z, 1, &lat, window).unwrap();
    solve_corrector(&avg, &lat).unwrap().chi
}

#[test]
fn profile_columns_are_rotations() {
    let (n, window) = (40, 9);
    let nu0 = corrector_profile(window, n).unwrap();
    let mean = nu0.iter().sum::<f64>() / n as f64;
    let base = point_mass_corrector(n, window, 0);
    for (a, b) in base.iter().zip(&nu0) {
        assert!((a + (b - mean)).abs() < 1e-12);
    }
    for m in 1..n {
        let column = point_mass_corrector(n, window, m);
        for k in 0..n {
            assert!(
                (column[k] - base[(k + n - m) % n]).abs() < 1e-12,
                "m = {m}, k = {k}"
            );
        }
    }
}

#[test]
fn averaged_field_gradient_scales_like_the_window() {
    // max |dzbar/dx| h^p should stay bounded as h shrinks
    let p = 0.5;
    let mut scaled = Vec::new();
    for (idx, n) in [32usize, 64, 128].into_iter().enumerate() {
        let lat = CircleLattice::new(n, 1.0, 1.0).unwrap();
        let h = lat.h();
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let z = bernoulli_field(n, 0.5, 100 * idx as u64 + seed);
            let avg = local_average(&z, 1, &lat, p).unwrap();
            let dx = h / 64.0;
            let mut prev = avg.smooth(0.0, 0);
            for step in 1..=(64 * n) {
                let next = avg.smooth(step as f64 * dx, 0);
                worst = worst.max(((next - prev) / dx).abs());
                prev = next;
            }
        }
        scaled.push(worst * h.powf(p));
    }
    let c = scaled[0];
    assert!(c > 0.0);
    for s in &scaled {
        assert!(*s <= 2.0 * c && *s >= c / 4.0, "{scaled:?}");
    }
}

#[test]
fn bound_ceilings_at_seven_sites() {
    let r = corrector_bound_report_for_window(64, 7, 200, 1).unwrap();
    assert!((r.ceiling_l1 - 2.0).abs() < 1e-15);
    assert!((r.ceiling_diff - 12.0 / 7.0).abs() < 1e-15);
    assert!((r.ceiling_jump - 6.0 / 7.0).abs() < 1e-15);
    // brute force over the profile
    let nu = corrector_profile(7, 64).unwrap();
    let l1: f64 = nu.iter().map(|x| x.abs()).sum();
    assert!((l1 - r.ceiling_l1).abs() < 1e-12);
    let max = nu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(max <= r.ceiling_jump);
    let diff = (0..64)
        .map(|d| (nu[(d + 1) % 64] - nu[d]).abs())
        .fold(0.0, f64::max);
    assert!(diff <= r.ceiling_diff);
}

#[test]
fn no_violations_over_many_fields() {
    for n in [64, 256] {
        for p in [1.0 / 3.0, 0.5] {
            let r = corrector_bound_report(n, p, 1000, 17).unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
            assert!(r.observed_l1 <= r.ceiling_l1 * (1.0 + 1e-12));
            assert!(r.observed_l1 > 0.0);
        }
    }
}

#[test]
fn single_site_window_gives_zero() {
    let r = corrector_bound_report_for_window(16, 1, 50, 3).unwrap();
    assert_eq!(
        (r.observed_l1, r.observed_diff, r.observed_jump),
        (0.0, 0.0, 0.0)
    );
    assert!(corrector_profile(1, 16).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn constant_fields_have_no_corrector() {
    let lat = CircleLattice::new(32, 2.0, 1.0).unwrap();
    for c in [0.0, 1.0] {
        let avg = local_average(&vec![c; 32], 1, &lat, 1.0 / 3.0).unwrap();
        assert!(solve_corrector(&avg, &lat)
            .unwrap()
            .chi
            .iter()
            .all(|&x| x.abs() < 1e-15));
    }
}

#[test]
fn even_windows_are_rejected() {
    let lat = CircleLattice::new(16, 1.0, 1.0).unwrap();
    assert!(local_average_with(&[0.0; 16], 1, &lat, 4).is_err());
    assert!(corrector_profile(6, 16).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_is_exact_and_methods_agree(
        n in 8usize..600,
        density in 0.05f64..0.95,
        p in 0.0f64..0.8,
        d in 0.25f64..4.0,
        seed in any::<u64>(),
    ) {
        let lat = CircleLattice::new(n, 1.0, d).unwrap();
        let z = bernoulli_field(n, density, seed);
        let avg = local_average(&z, 1, &lat, p).unwrap();
        let direct = solve_corrector_with(&avg.field, &avg.values, 1, avg.window(), &lat, ConvolutionMethod::Direct).unwrap();
        let fft = solve_corrector_with(&avg.field, &avg.values, 1, avg.window(), &lat, ConvolutionMethod::Fft).unwrap();
        for (k, zk) in z.iter().enumerate() {
            let residual = direct.apply_operator(k, 0) - (avg.values[k] - zk);
            prop_assert!(residual.abs() <= 1e-10);
            prop_assert!((direct.chi[k] - fft.chi[k]).abs() <= 1e-10);
        }
        // centred up to the rounding of an n-term sum
        let floor = 1e-13 * n as f64 * (1.0 + direct.max_abs());
        prop_assert!(direct.chi.iter().sum::<f64>().abs() < floor);
        let nn = avg.window() as f64;
        prop_assert!(direct.max_abs() <= (nn * nn - 1.0) / (24.0 * d) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn l1_identity_for_every_odd_window(half in 0usize..60, extra in 0usize..50) {
        let window = 2 * half + 1;
        let nu = corrector_profile(window, window + extra).unwrap();
        let l1: f64 = nu.iter().map(|x| x.abs()).sum();
        let nn = window as f64;
        prop_assert!((l1 - (nn * nn - 1.0) / 24.0).abs() <= 1e-12 * (1.0 + l1));
    }
}
