use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gave up after {attempts} attempts: {reason}")]
    GiveUp { attempts: usize, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("rank deficiency ({reason}) at indices {indices:?}")]
    RankDeficient { reason: String, indices: Vec<usize> },

    #[error("vertex {0} has zero degree")]
    ZeroDegree(usize),

    #[error("unsupported shift: {0}")]
    UnsupportedShift(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid power spectral density: {0}")]
    InvalidPsd(String),

    #[error("singular precision matrix: |1 - a*lambda_{index}| = {gap:e}")]
    SingularPrecision { index: usize, gap: f64 },

    #[error("degenerate normalization: filter response at the Perron frequency is {0:e}")]
    DegenerateNormalization(f64),

    #[error("vertex index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("shift operator does not match the graph: {0}")]
    ShiftGraphMismatch(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
