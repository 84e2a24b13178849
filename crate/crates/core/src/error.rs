use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix within {cap} iterations")]
    EigenNoConvergence { dim: usize, cap: usize },

    #[error("block ({row}, {col}): {reason}")]
    BlockLayout {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("cannot split {n} states into {blocks} irreducible blocks")]
    InfeasiblePartition { n: usize, blocks: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no delay recorded for link {from} -> {to}")]
    MissingDelay { from: usize, to: usize },

    #[error("slot {slot} out of range 1..={slots}")]
    SlotOutOfRange { slot: usize, slots: usize },

    #[error("gain synthesis failed after {restarts} restarts: best spectral radius {best_rho:.6} (needed < {target:.6})")]
    SynthesisFailed {
        best_rho: f64,
        target: f64,
        restarts: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::Dimension(_) => "dimension",
            Error::EigenNoConvergence { .. } => "eigen_no_convergence",
            Error::BlockLayout { .. } => "block_layout",
            Error::InfeasiblePartition { .. } => "infeasible_partition",
            Error::InvalidModel(_) => "invalid_model",
            Error::MissingDelay { .. } => "missing_delay",
            Error::SlotOutOfRange { .. } => "slot_out_of_range",
            Error::SynthesisFailed { .. } => "synthesis_failed",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
