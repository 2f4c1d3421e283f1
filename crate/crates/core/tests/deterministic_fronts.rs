//! ε = 0: the classical Fisher–KPP front, where everything is known.

use stokpp_core::ensemble::{self, ExperimentConfig, Route};
use stokpp_core::grid::GridSpec;
use stokpp_core::markers::{self, MarkerTrack};
use stokpp_core::noise::{CovarianceKernel, Interpretation, NoiseModel};
use stokpp_core::solver::{steps_for, FramePolicy, KppParams, NormalizedSolver};
use stokpp_core::sde;

const HORIZON: f64 = 100.0;

fn params(decay_rate: f64) -> KppParams {
    let noise = NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, 0);
    KppParams::new(1.0, 0.0, decay_rate, noise).with_dt(0.01)
}

fn grid() -> GridSpec {
    GridSpec::for_front(0.05, 80.0, 0.25).unwrap()
}

fn tracks(decay_rate: f64, levels: &[f64]) -> Vec<MarkerTrack> {
    let mut config = ExperimentConfig::new(params(decay_rate), grid(), HORIZON, 1, Route::Normalized);
    config.levels = levels.to_vec();
    config.snapshot_stride = 0.5;
    config.control = None;
    let record = ensemble::run_path(&config, 0).unwrap();
    record.outcome.unwrap().tracks
}

fn speed(track: &MarkerTrack) -> f64 {
    markers::speed_estimate(track, markers::DEFAULT_SPEED_WINDOW).unwrap().slope
}

#[test]
fn steep_start_selects_the_minimal_speed() {
    let s = speed(&tracks(3.0, &[0.5])[0]);
    let target = 2f64.sqrt();
    assert!((s - target).abs() < 0.03 * target, "speed {s}");
    // pulled fronts approach from below
    assert!(s < target);
}

#[test]
fn shallow_start_keeps_its_tail() {
    let s = speed(&tracks(1.0, &[0.5])[0]);
    assert!((s - 1.5).abs() < 0.015, "speed {s}");
}

#[test]
fn shallow_start_decay_rate() {
    let p = params(1.0);
    let v_path = sde::simulate_v(0.0, 1.0, p.dt, steps_for(HORIZON, p.dt) as usize, &p.noise).unwrap();
    let mut solver = NormalizedSolver::new(v_path, p.clone(), grid(), FramePolicy::default()).unwrap();
    solver.advance_to(steps_for(HORIZON, p.dt)).unwrap();
    let field = solver.field();
    let g = markers::a_marker(field, 0.5).unwrap().position;
    let fit = markers::decay_estimate(field, g, markers::DEFAULT_DECAY_OFFSETS).unwrap();
    assert!((fit.rate - 1.0).abs() < 0.05, "decay {}", fit.rate);
}

#[test]
fn local_speed_formula_matches_the_track() {
    let p = params(1.0);
    let steps = steps_for(HORIZON, p.dt);
    let v_path = sde::simulate_v(0.0, 1.0, p.dt, steps as usize, &p.noise).unwrap();
    let mut solver = NormalizedSolver::new(v_path, p.clone(), grid(), FramePolicy::default()).unwrap();
    solver.advance_to(steps).unwrap();
    let field = solver.field().clone();
    let theta = field.log_gradient().unwrap();
    let local = markers::instantaneous_speed(&field, &theta, 1.0, 0.5, p.kappa).unwrap();
    let fitted = speed(&tracks(1.0, &[0.5])[0]);
    assert!((local - fitted).abs() < 0.05 * fitted, "local {local}, fitted {fitted}");
}

#[test]
fn speed_does_not_depend_on_the_level() {
    for n in [1.0, 3.0] {
        let t = tracks(n, &[0.2, 0.8]);
        let (lo, hi) = (speed(&t[0]), speed(&t[1]));
        assert!((lo - hi).abs() < 0.02 * lo, "N = {n}: {lo} vs {hi}");
    }
}

#[test]
fn marker_gap_settles() {
    let t = tracks(1.0, &[0.2, 0.8]);
    let late: Vec<f64> = t[0]
        .times
        .iter()
        .zip(t[0].positions.iter().zip(&t[1].positions))
        .filter(|(&time, _)| time >= 0.5 * HORIZON)
        .map(|(_, (a, b))| a - b)
        .collect();
    assert!(late.iter().all(|&gap| gap > 0.0));
    let spread = late.iter().cloned().fold(f64::MIN, f64::max) - late.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.05, "gap spread {spread}");
}
