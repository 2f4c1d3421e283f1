//! Closed-form long-time predictions for front speed and tail decay.

use libm::sqrt;

use crate::noise::{kernel_eval, CovarianceKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Regime {
    ItoScalar,
    StratonovichScalar,
    ItoCorrelated,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Self::ItoScalar => "ito_scalar",
            Self::StratonovichScalar => "stratonovich_scalar",
            Self::ItoCorrelated => "ito_correlated",
        }
    }
}

/// `speed`/`decay` are `None` only for a degenerate Itô scalar front.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TheoryPrediction {
    pub regime: Regime,
    pub speed: Option<f64>,
    pub decay: Option<f64>,
    pub v_bar: Option<f64>,
    /// Value of N where the speed formula switches branch.
    pub threshold: f64,
}

impl TheoryPrediction {
    pub fn is_degenerate(&self) -> bool {
        self.speed.is_none()
    }
}

/// Speed and decay of the KPP front with reaction rate `r`: the tail keeps
/// its rate `θ = min(N, √(2r/κ))` and moves at `r/θ + κθ/2`, which is
/// `√(2κr)` once `N` passes the threshold.
fn kpp_branches(kappa: f64, rate: f64, n: f64) -> (f64, f64, f64) {
    let threshold = sqrt(2.0 * rate / kappa);
    if n >= threshold {
        (sqrt(2.0 * kappa * rate), threshold, threshold)
    } else {
        (rate / n + 0.5 * kappa * n, n, threshold)
    }
}

pub fn ito_scalar_prediction(kappa: f64, epsilon: f64, n: f64) -> TheoryPrediction {
    match crate::sde::stationary_mean(epsilon) {
        Some(v_bar) => {
            let (speed, decay, threshold) = kpp_branches(kappa, v_bar, n);
            TheoryPrediction {
                regime: Regime::ItoScalar,
                speed: Some(speed),
                decay: Some(decay),
                v_bar: Some(v_bar),
                threshold,
            }
        }
        None => TheoryPrediction {
            regime: Regime::ItoScalar,
            speed: None,
            decay: None,
            v_bar: Some(0.0),
            threshold: 0.0,
        },
    }
}

/// Independent of ε: the classical formulas.
pub fn stratonovich_scalar_prediction(kappa: f64, n: f64) -> TheoryPrediction {
    let (speed, decay, threshold) = kpp_branches(kappa, 1.0, n);
    TheoryPrediction {
        regime: Regime::StratonovichScalar,
        speed: Some(speed),
        decay: Some(decay),
        v_bar: Some(1.0),
        threshold,
    }
}

/// Itô noise with integrable covariance; independent of ε and Γ.
pub fn correlated_prediction(kappa: f64, n: f64) -> TheoryPrediction {
    let threshold = sqrt(2.0 / kappa);
    let (speed, decay) = if n > threshold {
        (sqrt(2.0 * kappa), threshold)
    } else {
        (0.5 * kappa * n + 1.0 / n, n)
    };
    TheoryPrediction {
        regime: Regime::ItoCorrelated,
        speed: Some(speed),
        decay: Some(decay),
        v_bar: None,
        threshold,
    }
}

/// Real roots `(small, large)` of `μ² − (2γ/κ)μ + 2/κ = 0`, or `None`
/// below the minimal speed `√(2κ)`.
pub fn dispersion_roots(kappa: f64, gamma: f64) -> Option<(f64, f64)> {
    let b = gamma / kappa;
    let disc = b * b - 2.0 / kappa;
    if gamma < sqrt(2.0 * kappa) {
        return None;
    }
    // at γ = √(2κ) the discriminant is rounding noise of either sign
    let s = if disc <= 8.0 * f64::EPSILON * b * b { 0.0 } else { sqrt(disc) };
    Some((b - s, b + s))
}

/// Predicted `E[w(x) w(x+lag)] = μ² + (ε²/κ) Γ(lag)` for `w = −(log u)_x`
/// in the front tail.
pub fn w_covariance_prediction(kernel: &CovarianceKernel, kappa: f64, epsilon: f64, mu: f64, lag: f64) -> f64 {
    mu * mu + epsilon * epsilon / kappa * kernel_eval(kernel, lag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::SQRT_2;

    #[test]
    fn reference_values() {
        let p = ito_scalar_prediction(1.0, 0.0, 3.0);
        assert!((p.speed.unwrap() - SQRT_2).abs() < 1e-15);
        assert!((p.decay.unwrap() - SQRT_2).abs() < 1e-15);

        let p = ito_scalar_prediction(1.0, 1.0, 0.5);
        assert!((p.speed.unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(p.decay, Some(0.5));

        let p = ito_scalar_prediction(1.0, 1.0, 3.0);
        assert!((p.speed.unwrap() - 1.0).abs() < 1e-15);
        assert!((p.decay.unwrap() - 1.0).abs() < 1e-15);

        assert!(ito_scalar_prediction(1.0, 1.5, 3.0).is_degenerate());
        assert!(ito_scalar_prediction(1.0, SQRT_2, 3.0).is_degenerate());

        assert!((stratonovich_scalar_prediction(1.0, 3.0).speed.unwrap() - SQRT_2).abs() < 1e-15);
        assert_eq!(stratonovich_scalar_prediction(1.0, 0.5).speed, Some(2.25));
        assert_eq!(stratonovich_scalar_prediction(2.0, 2.0).speed, Some(2.0));

        let c = correlated_prediction(2.0, 2.0);
        assert_eq!((c.speed, c.decay), (Some(2.0), Some(1.0)));
        let c = correlated_prediction(1.0, 1.0);
        assert_eq!((c.speed, c.decay), (Some(1.5), Some(1.0)));
        let c = correlated_prediction(1.0, SQRT_2);
        assert!((c.speed.unwrap() - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn dispersion_reference_values() {
        let (a, b) = dispersion_roots(1.0, SQRT_2).unwrap();
        assert!((a - SQRT_2).abs() < 1e-15 && (b - SQRT_2).abs() < 1e-15);
        let (a, b) = dispersion_roots(1.0, 1.5).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-15);
        assert_eq!(dispersion_roots(1.0, 1.0), None);
    }

    #[test]
    fn w_covariance_reference_values() {
        let se = CovarianceKernel::SquaredExponential { sigma2: 1.0, length: 2.0 };
        assert!((w_covariance_prediction(&se, 1.0, 1.0, SQRT_2, 0.0) - 3.0).abs() < 1e-15);
        assert_eq!(w_covariance_prediction(&se, 1.0, 0.0, 1.5, 0.7), 2.25);
        assert!((w_covariance_prediction(&se, 1.0, 1.0, 1.5, 1e3) - 2.25).abs() < 1e-15);
    }
}
