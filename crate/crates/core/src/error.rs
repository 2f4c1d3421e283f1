use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("instability at step {step} (node {node:?}): value {value}")]
    Instability {
        step: u64,
        node: Option<usize>,
        value: f64,
    },

    #[error("level {level} not attained (field range [{min}, {max}])")]
    LevelNotAttained { level: f64, min: f64, max: f64 },

    #[error("kernel not representable: negative spectral mass fraction {negative_fraction:e}")]
    KernelNotRepresentable { negative_fraction: f64 },

    #[error("degenerate front: {0}")]
    DegenerateFront(String),

    #[error("insufficient domain: {0}")]
    InsufficientDomain(String),

    #[error("experiment failed: {survivors} of {paths} paths survived (failed streams {failed:?})")]
    ExperimentFailed {
        survivors: usize,
        paths: usize,
        failed: Vec<u64>,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),
}
