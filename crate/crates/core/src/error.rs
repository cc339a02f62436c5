use thiserror::Error;

/// Errors raised by the simulator, learners and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not Hermitian (max |A - A^H| = {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("Schatten norm requires p >= 1 (got {0})")]
    InvalidNormOrder(f64),

    #[error("input {value} outside [{low}, {high}]")]
    InputOutOfRange { value: f64, low: f64, high: f64 },

    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("{qubits} qubits exceeds the dense superoperator limit of {max}")]
    SystemTooLarge { qubits: usize, max: usize },

    #[error("no convergent reservoir found after {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("target sequence diverged at step {step} (|y| = {value:e})")]
    Diverged { step: usize, value: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("normalized error undefined: target is constant over the window")]
    ConstantTarget,

    #[error("sequence too short: need {needed}, have {have}")]
    SequenceTooShort { needed: usize, have: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
