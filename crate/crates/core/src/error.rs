use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("observer coincides with the jammer (d = 0); pathloss is singular there")]
    SingularDistance,

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("position lies inside building {0}")]
    InsideBuilding(usize),

    #[error("could not place observer outside buildings after {0} attempts")]
    RejectionExhausted(usize),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("parameter file: {0}")]
    ParamFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
