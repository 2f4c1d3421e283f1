use proptest::prelude::*;
use stokpp_core::noise::{CovarianceKernel, Interpretation, NoiseModel};
use stokpp_core::sde::{self, SdeScheme};
use stokpp_core::stats::Estimate;

fn model(interp: Interpretation, seed: u64) -> NoiseModel {
    NoiseModel::new(CovarianceKernel::standard_wiener(), interp, seed)
}

fn time_average(scheme: SdeScheme, eps: f64, interp: Interpretation, paths: u64, horizon: f64) -> Estimate {
    let dt = 0.01;
    let steps = (horizon / dt) as usize;
    let runs: Vec<_> = (0..paths)
        .map(|k| sde::simulate_v_with(scheme, eps, 1.0, dt, steps, &model(interp, 2).with_stream(k)).unwrap())
        .collect();
    sde::estimate_time_average(&runs, sde::default_burn_in(horizon), |v| v).unwrap()
}

#[test]
fn ito_stationary_mean() {
    // 1 − ε²/2
    let est = time_average(SdeScheme::Splitting, 0.5, Interpretation::Ito, 8, 2000.0);
    assert!((est.value - 0.875).abs() < 4.0 * est.std_error + 2e-3, "{est:?}");
}

#[test]
fn stratonovich_stationary_mean_is_one() {
    let est = time_average(SdeScheme::Splitting, 0.5, Interpretation::Stratonovich, 8, 2000.0);
    assert!((est.value - 1.0).abs() < 4.0 * est.std_error + 2e-3, "{est:?}");
}

#[test]
fn schemes_agree_in_law() {
    let a = time_average(SdeScheme::Splitting, 0.8, Interpretation::Ito, 8, 1000.0);
    let b = time_average(SdeScheme::LogEuler, 0.8, Interpretation::Ito, 8, 1000.0);
    let c = time_average(SdeScheme::Midpoint, 0.8, Interpretation::Ito, 8, 1000.0);
    let target = 1.0 - 0.32;
    for est in [a, b, c] {
        assert!((est.value - target).abs() < 4.0 * est.std_error + 5e-3, "{est:?}");
    }
}

#[test]
fn degenerate_above_sqrt_two() {
    let steps = 20_000;
    for k in 0..8 {
        let path = sde::simulate_v(1.6, 1.0, 0.01, steps, &model(Interpretation::Ito, 9).with_stream(k)).unwrap();
        let last = *path.values.last().unwrap();
        assert!(last < 1e-3, "path {k} ends at {last}");
    }
    assert!(sde::stationary_mean(1.6).is_none());
    assert!(sde::stationary_mean(2f64.sqrt()).is_none());
}

#[test]
fn laplace_functional_reference() {
    // (1 − ε²λ/2)^{1 − 2/ε²} at ε = 1
    assert!((sde::stationary_laplace(-2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    assert!((sde::stationary_laplace(1.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
    assert!(sde::stationary_laplace(2.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn paths_stay_positive_and_finite(eps in 0.0f64..2.5, v0 in 1e-3f64..5.0, seed in 0u64..1000, strat in any::<bool>()) {
        let interp = if strat { Interpretation::Stratonovich } else { Interpretation::Ito };
        let path = sde::simulate_v(eps, v0, 0.01, 2000, &model(interp, seed)).unwrap();
        prop_assert!(path.values.iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn zero_noise_is_the_logistic_curve(v0 in 0.01f64..3.0) {
        let dt = 0.01;
        let path = sde::simulate_v(0.0, v0, dt, 500, &model(Interpretation::Ito, 0)).unwrap();
        for (k, &v) in path.values.iter().enumerate() {
            let t = k as f64 * dt;
            let exact = v0 * t.exp() / (1.0 + v0 * (t.exp() - 1.0));
            prop_assert!((v - exact).abs() < 1e-12 * exact.max(1.0));
        }
    }
}
