//! Host-side companion to `stokpp-core`: configuration files, output
//! formats, run manifests, thread-pool ensembles and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod covcheck;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use error::{Error, Result};
pub use parallel::Runner;
