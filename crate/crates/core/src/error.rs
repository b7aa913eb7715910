use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e})")]
    NotPositiveDefinite { pivot: f64 },

    #[error("domain error: {op} of {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("atoms {i} and {j} are closer than {min_distance} Å")]
    CoincidentAtoms { i: usize, j: usize, min_distance: f64 },

    #[error("langevin sampler diverged at step {step} (atom {atom})")]
    Diverged { step: u64, atom: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("no atom is corrupted; the denoising loss is undefined")]
    EmptyMask,

    #[error("molecule is missing {0} labels")]
    MissingLabels(&'static str),

    #[error("non-finite gradient for parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty batch")]
    EmptyBatch,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
