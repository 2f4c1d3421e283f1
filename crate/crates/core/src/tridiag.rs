//! Implicit half-step for `u_t = D u_xx + γ u_x` on a uniform grid.
//!
//! Backward Euler over `h`, solved in increment form `A δ = b − A u`, so a
//! spatially constant profile is reproduced bit for bit. Rows:
//!
//! * left: zero flux, `u_0 = u_1`
//! * interior: `−(α−β) u_{i−1} + (1+2α) u_i − (α+β) u_{i+1}` with
//!   `α = D h / dx²`, `β = γ h / (2 dx)`
//! * right: exponential continuation `u_{n−1} = r u_{n−2}` with a fixed
//!   ratio `r ∈ [0, 1]`, taken from the starting profile
//!
//! With `α ≥ |β|` the matrix is an M-matrix, so nonnegative and monotone
//! profiles stay nonnegative and monotone.
//!
//! The ratio is frozen rather than re-read from the current profile: a
//! data-dependent ratio makes the boundary nonlinear, and under multiplicative
//! noise it extrapolates noise into the domain (the right edge is the inflow
//! side in a co-moving frame). With a fixed ratio the whole step is linear, so
//! ensemble means obey the same comparison bounds as the continuum problem.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub(crate) struct ImplicitDiffusion {
    alpha: f64,
    beta: f64,
    ratio: f64,
    /// Forward-sweep superdiagonal `c'_i` for rows `0..n−1`.
    c_prime: Vec<f64>,
    /// Reciprocal pivots for rows `1..n−1` (index 0 unused).
    inv_pivot: Vec<f64>,
    d_prime: Vec<f64>,
}

impl ImplicitDiffusion {
    pub(crate) fn new(n: usize, dx: f64, diffusivity: f64, drift: f64, h: f64, ratio: f64) -> Self {
        assert!(n >= 3);
        debug_assert!((0.0..=1.0).contains(&ratio));
        let alpha = diffusivity * h / (dx * dx);
        let beta = drift * h / (2.0 * dx);
        let lower = -(alpha - beta);
        let diag = 1.0 + 2.0 * alpha;
        let upper = -(alpha + beta);
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        c_prime[0] = -1.0;
        for i in 1..n - 1 {
            let pivot = diag - lower * c_prime[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = upper / pivot;
        }
        Self {
            alpha,
            beta,
            ratio,
            c_prime,
            inv_pivot,
            d_prime: vec![0.0; n],
        }
    }

    /// Whether the scheme is monotone (`α ≥ |β|`).
    #[cfg(test)]
    pub(crate) fn is_monotone(&self) -> bool {
        self.alpha >= self.beta.abs()
    }

    pub(crate) fn apply(&mut self, u: &mut [f64]) {
        let n = u.len();
        debug_assert_eq!(n, self.c_prime.len());
        let (alpha, beta, ratio) = (self.alpha, self.beta, self.ratio);
        let lower = -(alpha - beta);

        let d = &mut self.d_prime;
        d[0] = -(u[0] - u[1]);
        for i in 1..n - 1 {
            let res = alpha * (u[i + 1] - 2.0 * u[i] + u[i - 1]) + beta * (u[i + 1] - u[i - 1]);
            d[i] = (res - lower * d[i - 1]) * self.inv_pivot[i];
        }
        // last row: δ_{n−1} − r δ_{n−2} = −(u_{n−1} − r u_{n−2})
        let res_last = -(u[n - 1] - ratio * u[n - 2]);
        let mut next = (res_last + ratio * d[n - 2]) / (1.0 + ratio * self.c_prime[n - 2]);
        u[n - 1] = (u[n - 1] + next).max(0.0);
        for i in (0..n - 1).rev() {
            let delta = d[i] - self.c_prime[i] * next;
            u[i] = (u[i] + delta).max(0.0);
            next = delta;
        }
    }
}

/// Ratio of the last two nodes clamped to `[0, 1]`; zero for a vanishing
/// tail.
pub(crate) fn tail_ratio(u: &[f64]) -> f64 {
    let n = u.len();
    let r = u[n - 1] / u[n - 2];
    if r.is_nan() { 0.0 } else { r.clamp(0.0, 1.0) }
}
