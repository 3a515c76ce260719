use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid noise model: {0}")]
    InvalidNoiseModel(String),

    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("operation requires the {expected} variant")]
    VariantMismatch { expected: &'static str },

    #[error("schedule parameter s = {0} outside [0, 1]")]
    OutOfRange(f64),

    #[error("initial state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("non-finite Hamiltonian entry at t = {0}")]
    NonFinite(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trial {trial} (seed {seed:#018x}) failed: {source}")]
    Trial {
        trial: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("missing coupling integral for levels ({0}, {1})")]
    MissingIntegral(usize, usize),

    #[error("asymptotic regime refused: {0}")]
    RegimeRefused(String),

    #[error("frequency vanishes on the integration interval near x = {0}")]
    Resonance(f64),

    #[error("zero oscillation frequency")]
    ZeroFrequency,

    #[error("derivative of order {0} unavailable")]
    Derivative(usize),

    #[error("quadrature budget exhausted after {evals} evaluations (error estimate {error:e})")]
    Budget { evals: usize, error: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("binary path format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
