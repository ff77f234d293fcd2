use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sigma_wave::diagnostics::fit_rate;
use sigma_wave::dynamics::{DeterministicSystem, IntegratorSettings, StochasticSystem};
use sigma_wave::{ComponentEnsemble, GridSpec, PairState, SpectralField};

const HORIZON: f64 = 0.5;

fn smooth_pairs(spec: GridSpec, n: usize, amplitude: f64, seed: u64) -> Vec<PairState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let symbol = |m: sigma_wave::Mode| amplitude * m.bracket().powi(-3);
            let pos = SpectralField::random_gaussian(spec, &mut rng, symbol);
            let vel = SpectralField::random_gaussian(spec, &mut rng, symbol);
            PairState::new(pos, vel).unwrap()
        })
        .collect()
}

fn distance(a: &[PairState], b: &[PairState]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.sub(y).unwrap().energy_norm(1.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Observed order from errors against a fine reference at `dt, dt/2, dt/4`.
fn observed_order(solve: impl Fn(f64) -> Vec<PairState>) -> f64 {
    let reference = solve(HORIZON / 1600.0);
    let dts = [HORIZON / 20.0, HORIZON / 40.0, HORIZON / 80.0];
    let errors: Vec<f64> = dts.iter().map(|&dt| distance(&solve(dt), &reference)).collect();
    assert!(errors.iter().all(|e| *e > 0.0 && e.is_finite()), "{errors:?}");
    -fit_rate(&dts.map(|d| 1.0 / d), &errors).unwrap().slope
}

fn steps(dt: f64) -> usize {
    (HORIZON / dt).round() as usize
}

fn deterministic(states: &[PairState], dt: f64) -> Vec<PairState> {
    let mut sys = DeterministicSystem::new(states.to_vec(), dt, true).unwrap();
    for _ in 0..steps(dt) {
        sys.step().unwrap();
    }
    sys.states().to_vec()
}

fn stochastic(mut sys: StochasticSystem) -> Vec<PairState> {
    let dt = sys.settings().dt;
    for _ in 0..steps(dt) {
        sys.step().unwrap();
    }
    sys.solution().unwrap()
}

fn assert_order_two(name: &str, order: f64) {
    assert!((order - 2.0).abs() <= 0.1, "{name}: observed order {order:.3}");
}

#[test]
fn deterministic_nlw_is_second_order() {
    let spec = GridSpec::new(16, 1.0).unwrap();
    let data = smooth_pairs(spec, 3, 2.0, 1);
    assert_order_two("nlw", observed_order(|dt| deterministic(&data, dt)));
}

#[test]
fn deterministic_meanfield_is_second_order() {
    let spec = GridSpec::new(16, 1.0).unwrap();
    let replicas = smooth_pairs(spec, 6, 2.0, 2);
    let order = observed_order(|dt| {
        let mut sys = replicas.clone();
        for _ in 0..steps(dt) {
            sys = sigma_wave::dynamics::step_deterministic_meanfield(&sys, dt).unwrap();
        }
        sys
    });
    assert_order_two("meanfield", order);
}

#[test]
fn noiseless_meanfield_is_second_order() {
    let spec = GridSpec::new(16, 1.0).unwrap();
    let residual = smooth_pairs(spec, 4, 1.0, 3);
    let order = observed_order(|dt| {
        let settings = IntegratorSettings::new(dt, 5, true).unwrap();
        stochastic(StochasticSystem::meanfield_from_psi(residual.clone(), settings, 9).unwrap().without_noise().unwrap())
    });
    assert_order_two("noiseless meanfield", order);
}

#[test]
fn noiseless_hlsm_is_second_order() {
    let spec = GridSpec::new(16, 1.0).unwrap();
    let residual = smooth_pairs(spec, 3, 1.0, 4);
    let order = observed_order(|dt| {
        let settings = IntegratorSettings::new(dt, 5, true).unwrap();
        let ens = ComponentEnsemble::new(residual.clone()).unwrap();
        stochastic(StochasticSystem::hlsm_from_psi(ens, settings, 9).unwrap().without_noise().unwrap())
    });
    assert_order_two("noiseless hlsm", order);
}
