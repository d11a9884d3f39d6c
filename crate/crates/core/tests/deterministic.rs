use std::f64::consts::PI;

use pdmp_core::det::{
    apply_heat_semigroup, discrete_laplacian, heat_kernel, integrate_frozen, solve_mean_field_with,
    MeanFieldOptions,
};
use pdmp_core::presets::{preset_model, PresetParams};
use pdmp_core::{CircleLattice, ScalarFn, SystemState};
use proptest::prelude::*;

/// Root of `s(u)(1 - u) - u/10` with `s = alpha/(alpha + beta)`, by bisection.
fn toy_equilibrium(mut lo: f64, mut hi: f64) -> f64 {
    let f = |u: f64| {
        let s = 1.0 / (1.0 + (-20.0 * (u - 0.5)).exp());
        s * (1.0 - u) - u / 10.0
    };
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn mean_field_settles_on_the_upper_equilibrium() {
    let lat = CircleLattice::new(8, 16.0, 1.0).unwrap();
    let params = PresetParams::new().with("v0", ScalarFn::constant(0.9));
    let (model, init) = preset_model("toy", &params, &lat, None).unwrap();
    let options = MeanFieldOptions {
        record_every: 1000,
        keep_occupancy: true,
    };
    let end = solve_mean_field_with(&lat, &model, &init, 200.0, 0.01, options)
        .unwrap()
        .last();
    let u_star = toy_equilibrium(0.6, 1.0);
    let s_star = 1.0 / (1.0 + (-20.0 * (u_star - 0.5)).exp());
    for k in 0..8 {
        assert!((end.u[k] - u_star).abs() < 1e-6, "{} vs {u_star}", end.u[k]);
        assert!((end.occupancy(k, 0, 0) - s_star).abs() < 1e-6);
    }
}

#[test]
fn frozen_integrator_is_second_order() {
    // one open site: V' = (1 - V) - V/10, V(0) = 0
    let lat = CircleLattice::new(1, 1.0, 0.0).unwrap();
    let (model, _) = preset_model("toy", &PresetParams::new(), &lat, None).unwrap();
    let state = SystemState::uniform(0.0, vec![0.0], model.types(), 2, 0).unwrap();
    let exact = 10.0 / 11.0 * (1.0 - (-1.1f64).exp());
    let err = |dt: f64| {
        (integrate_frozen(&state, &lat, &model, (0.0, 1.0), dt).unwrap()[0] - exact).abs()
    };
    for dt in [0.1, 0.05, 0.025] {
        let ratio = err(dt) / err(dt / 2.0);
        assert!((3.5..=4.5).contains(&ratio), "dt = {dt}: ratio {ratio}");
    }
}

#[test]
fn heat_kernel_integrates_to_one() {
    let m = 4096;
    for (t, x) in [(0.001, 0.3), (0.05, 0.0), (1.0, 0.7)] {
        let total: f64 = (0..m)
            .map(|j| heat_kernel(t, x, j as f64 / m as f64, 1.0, 1.0).unwrap())
            .sum::<f64>()
            / m as f64;
        assert!((total - 1.0).abs() < 1e-10, "t = {t}: {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_semigroup_composes(
        s in 0.0f64..0.2,
        t in 0.0f64..0.2,
        amps in prop::collection::vec(-1.0f64..1.0, 4),
        d in 0.1f64..2.0,
    ) {
        let m = 256;
        let samples: Vec<f64> = (0..m)
            .map(|j| {
                let x = 2.0 * PI * j as f64 / m as f64;
                amps[0] + amps[1] * x.sin() + amps[2] * (3.0 * x).cos() + amps[3] * (5.0 * x).sin()
            })
            .collect();
        let once = apply_heat_semigroup(&samples, s + t, d, 1.0).unwrap();
        let twice = apply_heat_semigroup(&apply_heat_semigroup(&samples, s, d, 1.0).unwrap(), t, d, 1.0).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn heat_kernel_is_symmetric(t in 1e-3f64..1.0, x in 0.0f64..2.0, y in 0.0f64..2.0) {
        prop_assert_eq!(heat_kernel(t, x, y, 0.7, 2.0).unwrap(), heat_kernel(t, y, x, 0.7, 2.0).unwrap());
    }

    #[test]
    fn laplacian_conserves_mass(v in prop::collection::vec(-10.0f64..10.0, 3..64), d in 0.1f64..5.0) {
        let lat = CircleLattice::new(v.len(), 3.0, d).unwrap();
        let total: f64 = discrete_laplacian(&v, &lat).iter().sum();
        prop_assert!(total.abs() < 1e-9 * lat.stiffness().max(1.0));
    }
}
