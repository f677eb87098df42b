use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("velocity is not strictly timelike future-directed")]
    NullOrSpacelikeVelocity,

    #[error("events are not causally related")]
    NotCausallyRelated,

    #[error("events are not chronologically related")]
    NotChronological,

    #[error("geodesic flow left its domain after parameter {0}")]
    FlowDomainExceeded(f64),

    #[error("support is not c2-cyclically monotone (positive cycle through pair {0})")]
    MonotonicityViolated(usize),

    #[error("anchor pair ({0}, {1}) is not in the support")]
    AnchorNotInSupport(usize, usize),

    #[error("potential is infinite at mass-carrying {side} point {index}")]
    NonIntegrablePotential { side: Side, index: usize },

    #[error("extended potential is not finite around the evaluation point")]
    NonFiniteNeighborhood,

    #[error("no strictly timelike velocity solves the twist equation")]
    NoTimelikeSolution,

    #[error("argmax at source {source_index} is ambiguous between targets {candidates:?}")]
    AmbiguousArgmax {
        source_index: usize,
        candidates: Vec<usize>,
    },

    #[error("grid node {0} lies outside the finiteness domain")]
    RegionLeavesDomain(usize),

    #[error("assignment is undefined at support point {0}")]
    PartialMap(usize),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

/// Which marginal an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
