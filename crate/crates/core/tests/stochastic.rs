use pdmp_core::model::sample_initial_state;
use pdmp_core::presets::{preset_model, PresetParams};
use pdmp_core::stoch::{il_simulate, oracle_simulate, pet_simulate, SimOptions};
use pdmp_core::{ChannelModel, CircleLattice, ScalarFn, SystemState};

/// Toy model with constant rates on `n` uncoupled sites.
fn constant_rates(alpha: f64, beta: f64, n: usize) -> (CircleLattice, ChannelModel) {
    let lat = CircleLattice::new(n, n as f64, 0.0).unwrap();
    let params = PresetParams::new()
        .with("alpha", ScalarFn::constant(alpha))
        .with("beta", ScalarFn::constant(beta));
    let (model, _) = preset_model("toy", &params, &lat, None).unwrap();
    (lat, model)
}

const OPEN: usize = 0;
const CLOSED: usize = 1;

#[test]
fn first_opening_time_has_unit_mean() {
    let (lat, model) = constant_rates(1.0, 0.0, 1);
    let start = SystemState::uniform(0.0, vec![0.0], model.types(), 2, CLOSED).unwrap();
    let opts = SimOptions {
        record_dt: Some(40.0),
        ..SimOptions::default()
    };
    let runs = 10_000;
    let mut sum = 0.0;
    for seed in 0..runs {
        let traj = pet_simulate(&lat, &model, &start, 40.0, &opts, seed).unwrap();
        let first = traj.events.first().expect("opens long before T = 40");
        assert_eq!((first.from, first.to), (CLOSED, OPEN));
        sum += first.t;
    }
    let mean = sum / runs as f64;
    assert!(
        (mean - 1.0).abs() < 3.0 / (runs as f64).sqrt(),
        "mean {mean}"
    );
}

#[test]
fn coarse_toy_pulse_sometimes_dies_out() {
    let lat = CircleLattice::from_spacing(0.25, 16.0, 1.0).unwrap();
    let (model, init) = preset_model("toy", &PresetParams::new(), &lat, None).unwrap();
    let runs = 200;
    let died = (0..runs)
        .filter(|&seed| {
            let state = sample_initial_state(&lat, &init, seed).unwrap();
            let traj =
                pet_simulate(&lat, &model, &state, 15.0, &SimOptions::default(), seed).unwrap();
            traj.final_state()
                .v
                .iter()
                .cloned()
                .fold(f64::MIN, f64::max)
                < 0.1
        })
        .count();
    assert!(
        died > 0 && died < runs as usize,
        "{died} of {runs} pulses died"
    );
}

#[test]
fn leaping_reaches_the_symmetric_stationary_law() {
    // 100 runs x 100 uncoupled sites = 10^4 samples
    let sites = 100;
    let (lat, model) = constant_rates(1.0, 1.0, sites);
    let start = SystemState::uniform(0.0, vec![0.5; sites], model.types(), 2, CLOSED).unwrap();
    let opts = SimOptions {
        record_dt: Some(100.0),
        ..SimOptions::default()
    };
    let mut open = 0;
    for seed in 0..100 {
        let end = il_simulate(&lat, &model, &start, 100.0, 1.0 / 64.0, &opts, seed)
            .unwrap()
            .final_state();
        open += (0..sites).filter(|&k| end.config(k, 0) == OPEN).count();
    }
    let m = (100 * sites) as f64;
    let fraction = open as f64 / m;
    let se = (0.25 / m).sqrt();
    assert!(
        (fraction - 0.5).abs() < 3.0 * se,
        "open fraction {fraction}"
    );
}

#[test]
fn oracle_survival_matches_the_bernoulli_product() {
    let sites = 100;
    let (lat, model) = constant_rates(1.0, 0.0, sites);
    let start = SystemState::uniform(0.0, vec![0.0; sites], model.types(), 2, CLOSED).unwrap();
    let opts = SimOptions {
        record_dt: Some(1.0),
        ..SimOptions::default()
    };
    let mut closed = 0;
    for seed in 0..100 {
        let end = oracle_simulate(&lat, &model, &start, 1.0, 1e-4, &opts, seed)
            .unwrap()
            .final_state();
        closed += (0..sites).filter(|&k| end.config(k, 0) == CLOSED).count();
    }
    let m = (100 * sites) as f64;
    let survival = closed as f64 / m;
    let exact = (1.0f64 - 1e-4).powi(10_000);
    let se = (exact * (1.0 - exact) / m).sqrt();
    assert!((exact - (-1.0f64).exp()).abs() < 1e-4);
    assert!((survival - exact).abs() < 3.0 * se, "survival {survival}");
}
