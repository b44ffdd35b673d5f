use thiserror::Error;

pub type Result<T> = std::result::Result<T, ShdsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShdsError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probabilities sum to {0}")]
    ProbabilitySum(f64),

    #[error("non-finite value from map `{map}` at t={t}")]
    NonFinite { map: &'static str, t: f64 },

    #[error("dead initial condition: r={0:?} lies in neither the flow set nor the jump set")]
    DeadInitialCondition(Vec<f64>),

    #[error("path {index}: {source}")]
    Path {
        index: usize,
        #[source]
        source: Box<ShdsError>,
    },

    #[error("grid too coarse: midpoint interpolation residual {midpoint:e} exceeds 10x nodal residual {nodal:e}; refine the grid")]
    GridTooCoarse { midpoint: f64, nodal: f64 },

    #[error("x = 0 is not allowed in this grid (residuals are normalized by |x|)")]
    ZeroInGrid,

    #[error("ensemble too small: {got} paths, need at least {need}")]
    EnsembleTooSmall { got: usize, need: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown symbol `{name}` at line {line}, column {column}")]
    UnknownSymbol {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("config error: {0}")]
    Config(String),
}
