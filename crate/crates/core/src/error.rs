use thiserror::Error;

#[derive(Debug, Error)]
pub enum WalkerError {
    #[error("impulse singularity: apparent inertia along the leg is {0:.3e} kg")]
    ImpulseSingularity(f64),
    #[error("mass matrix singular (condition estimate {0:.3e})")]
    MassMatrixSingular(f64),
    #[error("state divergence: {0}")]
    StateDivergence(String),
    #[error("no viable cycle: every sample fell before step {0}")]
    NoViableCycle(usize),
    #[error("L matrix singular (|det| = {0:.3e})")]
    LSingular(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl WalkerError {
    /// Short machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            WalkerError::ImpulseSingularity(_) => "impulse-singularity",
            WalkerError::MassMatrixSingular(_) => "mass-matrix-singular",
            WalkerError::StateDivergence(_) => "state-divergence",
            WalkerError::NoViableCycle(_) => "no-viable-cycle",
            WalkerError::LSingular(_) => "l-singular",
            WalkerError::InvalidParams(_) => "invalid-params",
            WalkerError::Config(_) => "config",
            WalkerError::Io(_) | WalkerError::Csv(_) | WalkerError::Json(_) => "io",
        }
    }
}

pub type Result<T, E = WalkerError> = std::result::Result<T, E>;
