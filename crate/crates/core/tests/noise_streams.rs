use stokpp_core::grid::GridSpec;
use stokpp_core::noise::{
    field_increments, scalar_increments, CovarianceKernel, FieldNoise, FieldSampler, Interpretation, NoiseModel,
    SamplerMethod,
};
use stokpp_core::stats;

fn wiener(seed: u64) -> NoiseModel {
    NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, seed)
}

#[test]
fn scalar_increments_have_variance_dt() {
    let dt = 0.01;
    let dw = scalar_increments(&wiener(11), dt, 200_000).unwrap();
    let mean = stats::mean_estimate(&dw);
    assert!(mean.value.abs() < 4.0 * mean.std_error, "mean {mean:?}");
    let squares: Vec<f64> = dw.iter().map(|x| x * x).collect();
    let var = stats::mean_estimate(&squares);
    assert!((var.value - dt).abs() < 4.0 * var.std_error, "var {var:?}");
    // fourth moment of a Gaussian: 3 dt²
    let fourth: Vec<f64> = dw.iter().map(|x| x.powi(4)).collect();
    let m4 = stats::mean_estimate(&fourth);
    assert!((m4.value - 3.0 * dt * dt).abs() < 5.0 * m4.std_error);
}

#[test]
fn streams_repeat_and_separate() {
    let a = scalar_increments(&wiener(5).with_stream(2), 1.0, 50_000).unwrap();
    let b = scalar_increments(&wiener(5).with_stream(2), 1.0, 50_000).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    for other in [wiener(5).with_stream(3), wiener(6).with_stream(2)] {
        let c = scalar_increments(&other, 1.0, 50_000).unwrap();
        let prod: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x * y).collect();
        let r = stats::mean_estimate(&prod);
        assert!(r.value.abs() < 4.0 * r.std_error, "streams correlate: {r:?}");
    }
}

#[test]
fn interpretation_does_not_change_the_increments() {
    let ito = wiener(8);
    let strat = NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Stratonovich, 8);
    assert_eq!(scalar_increments(&ito, 0.01, 100).unwrap(), scalar_increments(&strat, 0.01, 100).unwrap());
}

#[test]
fn constant_kernel_is_one_shared_increment() {
    let grid = GridSpec::new(0.0, 0.1, 64).unwrap();
    let model = NoiseModel::new(CovarianceKernel::Constant { sigma2: 2.0 }, Interpretation::Ito, 3);
    let field = field_increments(&model, &grid, 0.01).unwrap();
    let scalar = scalar_increments(&model, 0.01, 1).unwrap()[0];
    assert!(field.iter().all(|&z| z.to_bits() == scalar.to_bits()));
}

/// Empirical `E[Δζ(x_b) Δζ(x_b + lag)] / dt` against the kernel.
fn covariance_z(noise: &mut FieldNoise, kernel: &CovarianceKernel, dx: f64, lag_cells: usize, draws: usize) -> f64 {
    let dt = 0.5;
    let mut z = vec![0.0; noise.nodes()];
    let base = 4;
    let prods: Vec<f64> = (0..draws)
        .map(|_| {
            noise.fill(dt, &mut z);
            z[base] * z[base + lag_cells]
        })
        .collect();
    let est = stats::mean_estimate(&prods);
    (est.value - dt * kernel.eval(lag_cells as f64 * dx)) / est.std_error
}

#[test]
fn circulant_and_dense_samplers_match_the_kernel() {
    let kernel = CovarianceKernel::SquaredExponential { sigma2: 1.5, length: 1.0 };
    let grid = GridSpec::new(0.0, 0.1, 200).unwrap();
    let model = NoiseModel::new(kernel.clone(), Interpretation::Ito, 21);
    let circ = FieldSampler::circulant(&kernel, &grid).unwrap();
    assert_eq!(circ.method(), SamplerMethod::Circulant);
    let dense = FieldSampler::dense(&kernel, &grid).unwrap();
    assert_eq!(dense.method(), SamplerMethod::Dense);
    for sampler in [circ, dense] {
        let mut noise = FieldNoise::with_sampler(sampler, model.stream());
        for lag in [0, 5, 10, 30] {
            let z = covariance_z(&mut noise, &kernel, grid.dx, lag, 40_000);
            assert!(z.abs() < 4.0, "{:?} lag {lag}: z = {z}", noise.sampler().method());
        }
    }
}

#[test]
fn tabulated_kernel_matches_its_table() {
    use stokpp_core::noise::TabulatedKernel;
    // triangular covariance: positive definite (Fourier transform ∝ sinc²)
    let lags: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let values: Vec<f64> = lags.iter().map(|l| (1.0 - l / 2.0).max(0.0)).collect();
    let kernel = CovarianceKernel::Tabulated(TabulatedKernel::new(lags, values).unwrap());
    let grid = GridSpec::new(0.0, 0.1, 128).unwrap();
    let model = NoiseModel::new(kernel.clone(), Interpretation::Ito, 4);
    let mut noise = FieldNoise::new(&model, &grid).unwrap();
    for lag in [0, 7, 15, 25] {
        let z = covariance_z(&mut noise, &kernel, grid.dx, lag, 40_000);
        assert!(z.abs() < 4.0, "lag {lag}: z = {z}");
    }
}
