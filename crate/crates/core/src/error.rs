use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("a time grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("curves live on different grids ({0} vs {1} points)")]
    GridMismatch(usize, usize),

    #[error("invalid observation pattern: {0}")]
    InvalidPattern(String),

    #[error("observation pattern contains no grid point")]
    EmptySupport,

    #[error("grid index {0} is outside the observed support")]
    OutsideSupport(usize),

    #[error("partial curves do not share the same support")]
    SupportMismatch,

    #[error("metric `{metric}` cannot be used with {pattern} observations")]
    MetricPatternMismatch {
        metric: &'static str,
        pattern: &'static str,
    },

    #[error("all pairwise distances are zero")]
    DegenerateDistances,

    #[error("invalid warp: {0}")]
    InvalidWarp(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} curves, got {found}")]
    TooFewCurves { needed: usize, found: usize },

    #[error("no trial warp vector was accepted")]
    EmptyWarpSet,
}
