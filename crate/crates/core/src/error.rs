use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the disc of curvature {k}")]
    OutsideDisc { x: f64, y: f64, k: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("input too large for {what}: {size} > {cap}")]
    SizeCap { what: &'static str, size: usize, cap: usize },

    #[error("point with radius {radius} is beyond the grid radius {limit}")]
    OutOfRange { radius: f64, limit: f64 },

    #[error("bin index {index} does not fit in the field of order {q}")]
    FieldOverflow { index: u64, q: u64 },

    #[error("decode failure: {0}")]
    DecodeFailure(String),

    #[error("cannot resolve label sum {sum} in bin {bin} with at most {h} terms")]
    UnresolvableLabel { bin: u64, sum: u64, h: usize },

    #[error("label code infeasible: {0}")]
    LabelCode(String),

    #[error("grouping infeasible: {0}")]
    Grouping(String),

    #[error("data is not separable: {0}")]
    NotSeparable(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
