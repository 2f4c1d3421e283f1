//! Numerics for one-dimensional stochastic KPP fronts,
//! `u_t = (κ/2) u_xx + u(1 − u) + ε u ζ̇`, under scalar Wiener noise
//! (Itô or Stratonovich) and Itô noise with an integrable spatial covariance.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration,
//! parallel ensembles and the command line live in the `stokpp` crate.
//!
//! Module map:
//!
//! * [`grid`] uniform grids, fields, moving-frame bookkeeping
//! * [`noise`] covariance kernels and counter-based Gaussian increment streams
//! * [`sde`] the spatially flat logistic SDE and its stationary law
//! * [`solver`] Strang-split SPDE and normalized random-PDE solvers
//! * [`markers`] level markers, speed and decay estimation
//! * [`theory`] closed-form speed and decay predictions
//! * [`ensemble`] multi-path experiments and aggregation
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ensemble;
pub mod error;
mod fft;
pub mod grid;
pub mod markers;
pub mod noise;
pub mod sde;
pub mod solver;
pub mod stats;
pub mod theory;
mod tridiag;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec};
pub use noise::{CovarianceKernel, Interpretation, NoiseModel};
pub use sde::SdePath;
pub use solver::{FramePolicy, KppParams, SolverState};
pub use theory::{Regime, TheoryPrediction};
