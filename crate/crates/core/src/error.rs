use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty beampattern: no grid angle inside [{lo}, {hi}]")]
    EmptyBeampattern { lo: f64, hi: f64 },

    #[error("combined precoder vanishes (exact beam cancellation)")]
    ZeroPrecoder,

    #[error("GOSPA undefined with infinite cut-off and cardinalities {0} vs {1}")]
    UndefinedGospa(usize, usize),

    #[error("singular linear system")]
    Singular,

    #[error("non-finite loss at iteration {iteration} (batch seed {seed})")]
    NonFiniteLoss { iteration: usize, seed: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
