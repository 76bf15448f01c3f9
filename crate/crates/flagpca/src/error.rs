use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("flag signature must be strictly increasing and start above zero, got {0:?}")]
    NonIncreasingSignature(Vec<usize>),
    #[error("largest signature entry {last} must be smaller than the ambient dimension {ambient}")]
    AmbientTooSmall { last: usize, ambient: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("flag types differ")]
    TypeMismatch,
    #[error("matrix rank {rank} is below the required {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("retraction target lost column rank")]
    RankCollapse,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("point at or beyond the cut locus, log map undefined")]
    CutLocus,
    #[error("tangent vector base does not match: {0}")]
    BaseMismatch(String),
    #[error("empty dataset")]
    EmptyData,
    #[error("operation requires a dual variant, got {0}")]
    WrongVariant(String),
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(i64),
    #[error("invalid dimensions: {0}")]
    BadDims(String),
    #[error("degenerate shape after {0} resampling attempts")]
    DegenerateShape(usize),
    #[error("{0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
