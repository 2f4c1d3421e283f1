use stokpp_core::ensemble::{self, ExperimentConfig, Route};
use stokpp_core::grid::GridSpec;
use stokpp_core::noise::{CovarianceKernel, Interpretation, NoiseModel};
use stokpp_core::solver::KppParams;

fn config(paths: usize, seed: u64) -> ExperimentConfig {
    let noise = NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, seed);
    let params = KppParams::new(1.0, 0.5, 3.0, noise).with_dt(0.01);
    let grid = GridSpec::for_front(0.1, 40.0, 0.25).unwrap();
    let mut c = ExperimentConfig::new(params, grid, 20.0, paths, Route::Normalized);
    c.control = None;
    c
}

fn positions(c: &ExperimentConfig, id: u64) -> Vec<u64> {
    let data = ensemble::run_path(c, id).unwrap().outcome.unwrap();
    data.tracks[0].positions.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn a_path_does_not_depend_on_the_ensemble_size() {
    assert_eq!(positions(&config(4, 7), 3), positions(&config(8, 7), 3));
}

#[test]
fn streams_differ() {
    let c = config(4, 7);
    assert_ne!(positions(&c, 0), positions(&c, 1));
    assert_ne!(positions(&c, 0), positions(&config(4, 8), 0));
}

#[test]
fn experiments_repeat_exactly() {
    let a = ensemble::run_experiment(&config(4, 11)).unwrap();
    let b = ensemble::run_experiment(&config(4, 11)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.survivors, vec![0, 1, 2, 3]);
}
