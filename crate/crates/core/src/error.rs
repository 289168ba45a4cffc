use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("rank-deficient normal matrix: numerical rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("Gauss-Newton diverged: update norm {norm:.3e} m exceeds {limit:.3e} m")]
    Divergence { norm: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("scenario generation gave up after {0} attempts")]
    RetryBudgetExhausted(usize),

    #[error("action index {index} out of range for {len} actions")]
    ActionOutOfRange { index: usize, len: usize },

    #[error("episode already finished; call reset")]
    EpisodeDone,

    #[error("environment has not been reset")]
    NotReset,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown baseline `{name}` (valid: {valid})")]
    UnknownBaseline { name: String, valid: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
