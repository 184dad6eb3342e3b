use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("time {t} s precedes last programming time {t_prog} s")]
    TimeOrder { t: f64, t_prog: f64 },

    #[error("index ({row}, {col}) out of range for {rows}x{cols} crossbar")]
    Index { row: usize, col: usize, rows: usize, cols: usize },

    #[error(
        "input matrix is rank deficient (rank {rank} < {rows} rows); use more characterization inputs or a ridge term > 0"
    )]
    RankDeficient { rank: usize, rows: usize },

    #[error("degenerate target: the exact MVM output has zero norm, relative errors are undefined")]
    DegenerateTarget,

    #[error("loss became non-finite at iteration {iteration}; the learning rate is probably too high")]
    Diverged { iteration: usize },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error("layer {layer} ({rows}x{cols}) does not fit a {max_rows}x{max_cols} core")]
    LayerTooLarge { layer: usize, rows: usize, cols: usize, max_rows: usize, max_cols: usize },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { name, reason: reason.into() }
}
