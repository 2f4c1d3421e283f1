//! The spatially flat logistic SDE `dv = v(1 − v) dt + ε v dW` and its
//! stationary law.
//!
//! The default scheme splits each step into the exact logistic flow and the
//! exact geometric noise factor, which is the same pair of substeps the SPDE
//! solver applies at every node. A constant-kernel SPDE started from `u ≡ v0`
//! therefore reproduces [`simulate_v`] bit for bit. Two log-space schemes
//! (explicit Euler and implicit midpoint) are kept as independent routes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::noise::{CovarianceKernel, Interpretation, NoiseModel};
use crate::stats::{self, Estimate};

/// Paths above this value are reported as unstable.
pub const OVERFLOW_LIMIT: f64 = 1e15;

/// Exact solution of `u' = r u (1 − u)` over one step, given
/// `growth = exp(r Δt)`. Maps `[0, ∞)` into itself and is increasing in `u`.
#[inline]
pub fn logistic_flow(u: f64, growth: f64) -> f64 {
    u * growth / (1.0 + u * (growth - 1.0))
}

/// Multiplicative factor of the noise substep, `exp(ε Δζ − c)` with the Itô
/// correction `c = ε² Γ(0) Δt / 2` (zero for Stratonovich).
#[inline]
pub fn noise_factor(epsilon: f64, increment: f64, correction: f64) -> f64 {
    libm::exp(epsilon * increment - correction)
}

/// `ε² Γ(0) Δt / 2` for Itô, zero for Stratonovich.
pub fn ito_correction(interpretation: Interpretation, epsilon: f64, variance: f64, dt: f64) -> f64 {
    match interpretation {
        Interpretation::Ito => 0.5 * epsilon * epsilon * variance * dt,
        Interpretation::Stratonovich => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SdePath {
    pub dt: f64,
    /// `v` at steps `0..=steps`; `values[0]` is the initial value.
    pub values: Vec<f64>,
    pub interpretation: Interpretation,
    pub epsilon: f64,
}

impl SdePath {
    pub fn steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeScheme {
    /// Exact logistic flow followed by the exact geometric noise factor.
    Splitting,
    /// Explicit Euler for `log v`.
    LogEuler,
    /// Implicit midpoint for `log v`, drift evaluated at `(v_n + v_{n+1})/2`.
    Midpoint,
}

/// Simulates `v` with the splitting scheme on the stream of `model`.
/// The interpretation is taken from the model.
pub fn simulate_v(epsilon: f64, v0: f64, dt: f64, steps: usize, model: &NoiseModel) -> Result<SdePath> {
    simulate_v_with(SdeScheme::Splitting, epsilon, v0, dt, steps, model)
}

pub fn simulate_v_with(
    scheme: SdeScheme,
    epsilon: f64,
    v0: f64,
    dt: f64,
    steps: usize,
    model: &NoiseModel,
) -> Result<SdePath> {
    let sigma2 = match model.kernel {
        CovarianceKernel::Constant { sigma2 } => sigma2,
        _ => return Err(Error::Misuse("the flat SDE needs a constant kernel".into())),
    };
    check_inputs(epsilon, v0, dt)?;
    let mut stream = model.stream();
    let mut values = Vec::with_capacity(steps + 1);
    values.push(v0);
    let stepper = Stepper::new(scheme, epsilon, sigma2, model.interpretation, dt);
    let mut v = v0;
    for step in 0..steps {
        let dw = stream.scalar_increment(sigma2, dt);
        v = stepper.advance(v, dw);
        if !(v <= OVERFLOW_LIMIT) || !(v > 0.0) {
            return Err(Error::Instability {
                step: step as u64 + 1,
                node: None,
                value: v,
            });
        }
        values.push(v);
    }
    Ok(SdePath {
        dt,
        values,
        interpretation: model.interpretation,
        epsilon,
    })
}

/// Same as [`simulate_v_with`] but driven by explicit Wiener increments
/// (already scaled by `√Δt`), unit kernel variance.
pub fn simulate_v_from_increments(
    scheme: SdeScheme,
    epsilon: f64,
    interpretation: Interpretation,
    v0: f64,
    dt: f64,
    increments: &[f64],
) -> Result<SdePath> {
    check_inputs(epsilon, v0, dt)?;
    let stepper = Stepper::new(scheme, epsilon, 1.0, interpretation, dt);
    let mut values = Vec::with_capacity(increments.len() + 1);
    values.push(v0);
    let mut v = v0;
    for (step, &dw) in increments.iter().enumerate() {
        v = stepper.advance(v, dw);
        if !(v <= OVERFLOW_LIMIT) || !(v > 0.0) {
            return Err(Error::Instability {
                step: step as u64 + 1,
                node: None,
                value: v,
            });
        }
        values.push(v);
    }
    Ok(SdePath {
        dt,
        values,
        interpretation,
        epsilon,
    })
}

fn check_inputs(epsilon: f64, v0: f64, dt: f64) -> Result<()> {
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::Misuse(format!("v0 must be positive, got {v0}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Misuse(format!("dt must be positive, got {dt}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Misuse(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

struct Stepper {
    scheme: SdeScheme,
    epsilon: f64,
    dt: f64,
    growth: f64,
    correction: f64,
}

impl Stepper {
    fn new(scheme: SdeScheme, epsilon: f64, sigma2: f64, interpretation: Interpretation, dt: f64) -> Self {
        Self {
            scheme,
            epsilon,
            dt,
            growth: libm::exp(dt),
            correction: ito_correction(interpretation, epsilon, sigma2, dt),
        }
    }

    #[inline]
    fn advance(&self, v: f64, dw: f64) -> f64 {
        match self.scheme {
            SdeScheme::Splitting => {
                logistic_flow(v, self.growth) * noise_factor(self.epsilon, dw, self.correction)
            }
            SdeScheme::LogEuler => {
                v * libm::exp((1.0 - v) * self.dt - self.correction + self.epsilon * dw)
            }
            SdeScheme::Midpoint => {
                let base = libm::log(v) - self.correction + self.epsilon * dw;
                let mut next = v * libm::exp((1.0 - v) * self.dt - self.correction + self.epsilon * dw);
                for _ in 0..50 {
                    let mid = 0.5 * (v + next);
                    let candidate = libm::exp(base + (1.0 - mid) * self.dt);
                    let done = (candidate - next).abs() <= 1e-15 * candidate.abs();
                    next = candidate;
                    if done {
                        break;
                    }
                }
                next
            }
        }
    }
}

/// Long-run mean `1 − ε²/2` of the Itô equation; `None` once `ε ≥ √2`,
/// where `v → 0` almost surely.
pub fn stationary_mean(epsilon: f64) -> Option<f64> {
    let v_bar = 1.0 - 0.5 * epsilon * epsilon;
    (v_bar > 0.0).then_some(v_bar)
}

/// Laplace functional `E[e^{λ v}] = (1 − ε² λ / 2)^{1 − 2/ε²}` of the
/// stationary law, for `0 < ε < √2` and `λ < 2/ε²`.
pub fn stationary_laplace(lambda: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || stationary_mean(epsilon).is_none() {
        return Err(Error::Domain(format!(
            "stationary law needs 0 < epsilon < sqrt(2), got {epsilon}"
        )));
    }
    let e2 = epsilon * epsilon;
    if !(lambda < 2.0 / e2) {
        return Err(Error::Domain(format!(
            "Laplace functional diverges for lambda >= 2/epsilon^2 = {}",
            2.0 / e2
        )));
    }
    Ok(libm::pow(1.0 - 0.5 * e2 * lambda, 1.0 - 2.0 / e2))
}

/// Time-and-ensemble average of `f(v(t))` over `t > burn_in`. The standard
/// error comes from the spread of the per-path time averages.
pub fn estimate_time_average(paths: &[SdePath], burn_in: f64, f: impl Fn(f64) -> f64) -> Result<Estimate> {
    if paths.is_empty() {
        return Err(Error::Misuse("empty ensemble".into()));
    }
    let mut per_path = Vec::with_capacity(paths.len());
    let mut scratch = Vec::new();
    for p in paths {
        if !(burn_in < p.duration()) {
            return Err(Error::Misuse(format!(
                "burn-in {burn_in} is not shorter than the path duration {}",
                p.duration()
            )));
        }
        scratch.clear();
        scratch.extend(
            p.values
                .iter()
                .enumerate()
                .filter(|(k, _)| p.time(*k) > burn_in)
                .map(|(_, &v)| f(v)),
        );
        per_path.push(stats::mean(&scratch));
    }
    Ok(stats::mean_estimate(&per_path))
}

/// Monte Carlo estimate of `E[e^{λ v}]` after `burn_in`.
pub fn estimate_laplace(paths: &[SdePath], lambda: f64, burn_in: f64) -> Result<Estimate> {
    estimate_time_average(paths, burn_in, |v| libm::exp(lambda * v))
}

/// Default burn-in: the first 20% of the horizon.
pub fn default_burn_in(horizon: f64) -> f64 {
    0.2 * horizon
}
