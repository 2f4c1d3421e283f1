//! Empirical check of field-noise covariances against the kernel.

use serde::Serialize;
use stokpp_core::grid::GridSpec;
use stokpp_core::noise::{CovarianceKernel, FieldNoise, Interpretation, NoiseModel, SamplerMethod};
use stokpp_core::stats;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct CovRow {
    pub lag: f64,
    /// Lag actually used, snapped to the grid.
    pub grid_lag: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovReport {
    pub method: SamplerMethod,
    pub nodes: usize,
    pub draws: usize,
    pub dt: f64,
    pub rows: Vec<CovRow>,
}

impl CovReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }
}

/// Draws `draws` increments on `grid` and compares the products
/// `Δζ(x_b) Δζ(x_b + lag)` with `dt·Γ(lag)` at a base node `b` near the left
/// end. A zero standard error (rank-one kernels at lag 0 on a constant
/// field, say) gives `z = 0` when the estimate is exact and infinity
/// otherwise.
pub fn check(kernel: &CovarianceKernel, grid: &GridSpec, dt: f64, draws: usize, seed: u64, lags: &[f64]) -> Result<CovReport> {
    if draws < 2 {
        return Err(Error::Format("covcheck needs at least 2 draws".into()));
    }
    let base = (grid.n / 64).min(8);
    let cells: Vec<usize> = lags.iter().map(|l| (l / grid.dx).round() as usize).collect();
    if let Some(&c) = cells.iter().find(|&&c| base + c >= grid.n) {
        return Err(Error::Format(format!(
            "lag {} exceeds the grid ({} nodes)",
            c as f64 * grid.dx,
            grid.n
        )));
    }
    let model = NoiseModel::new(kernel.clone(), Interpretation::Ito, seed);
    let mut noise = FieldNoise::new(&model, grid)?;
    let mut products = vec![Vec::with_capacity(draws); lags.len()];
    let mut z = vec![0.0; grid.n];
    for _ in 0..draws {
        noise.fill(dt, &mut z);
        for (j, &c) in cells.iter().enumerate() {
            products[j].push(z[base] * z[base + c]);
        }
    }
    let rows = lags
        .iter()
        .zip(&cells)
        .zip(&products)
        .map(|((&lag, &c), p)| {
            let est = stats::mean_estimate(p);
            let grid_lag = c as f64 * grid.dx;
            let exact = dt * kernel.eval(grid_lag);
            let diff = est.value - exact;
            let z = if est.std_error > 0.0 {
                diff / est.std_error
            } else if diff.abs() <= 1e-12 * exact.abs().max(dt) {
                0.0
            } else {
                f64::INFINITY
            };
            CovRow {
                lag,
                grid_lag,
                estimate: est.value,
                std_error: est.std_error,
                exact,
                z,
            }
        })
        .collect();
    Ok(CovReport {
        method: noise.sampler().method(),
        nodes: grid.n,
        draws,
        dt,
        rows,
    })
}
