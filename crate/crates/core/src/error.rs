use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("assumption (a1) violated: tail exponent {exponent} >= -1")]
    TraceClassDivergent { exponent: f64 },

    #[error("Dini integral diverges: tail test failed at scale s = {scale:e} (local exponent {exponent})")]
    DiniDivergent { scale: f64, exponent: f64 },

    #[error("cloud sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("cloud size {size} exceeds the exact-solver limit {max}")]
    TooLarge { size: usize, max: usize },

    #[error("noise operator is singular at mode {mode} (singular value {singular_value:e})")]
    SingularNoise { mode: usize, singular_value: f64 },

    #[error("Picard iteration did not converge in {} iterations; last rho = {:?}", .rhos.len(), .rhos.last())]
    NotConverged { rhos: Vec<f64> },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("time step crosses freeze node at t = {node}")]
    CrossesFreezeNode { node: f64 },

    #[error("frozen flow has no snapshot at t = {0}")]
    MissingSnapshot(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration:{}", join_lines(.0))]
    Config(Vec<crate::config::ConfigError>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_lines(errors: &[crate::config::ConfigError]) -> String {
    errors.iter().map(|e| format!("\n  {e}")).collect()
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
