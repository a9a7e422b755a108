use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("player id must be a non-empty token")]
    EmptyPlayerId,

    #[error("player {0} appears more than once in a lineup")]
    DuplicatePlayer(String),

    #[error("a lineup needs exactly 5 players, got {0}")]
    BadLineupSize(usize),

    #[error("player {0} is on both offense and defense")]
    LineupOverlap(String),

    #[error("points must be within 0..=6, got {0}")]
    PointsOutOfRange(i64),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: {reason}")]
    Validation { line: u64, reason: String },

    #[error("no data")]
    EmptyData,

    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no prior for lineup {0}")]
    MissingPrior(String),

    #[error("backtest needs at least {needed} weeks, data has {available}")]
    InsufficientWeeks { needed: u32, available: u32 },

    #[error("baseline RMSE is zero")]
    ZeroBaseline,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown player {0}")]
    UnknownPlayer(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
