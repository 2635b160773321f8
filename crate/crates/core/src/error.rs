use thiserror::Error;

use crate::lattice::LatticePoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("order {requested} exceeds the region horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },
    #[error("the origin is not an accessible point of the region")]
    OriginNotAccessible,
    #[error("at least two outcome categories are required, got {0}")]
    DegenerateCategoryCount(usize),
    #[error("the region has no accessible points")]
    EmptyRegion,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("points do not share a common order")]
    MixedOrder,
    #[error("hull generators are empty")]
    EmptyGenerators,
    #[error("{0} does not satisfy the boundary equation")]
    NotOnBoundary(LatticePoint),
    #[error("{0} is not a boundary point of the region")]
    NotBoundary(LatticePoint),
    #[error("{0} lies beyond the horizon of the path-count table")]
    UnknownPoint(LatticePoint),
    #[error("observation has order zero")]
    ZeroOrder,
    #[error("observation order {0} is too small for the closed form")]
    OrderTooSmall(usize),
    #[error("region is not closed at horizon {horizon}: residual mass {residual}")]
    NotClosedAtHorizon { horizon: usize, residual: String },
    #[error("empty input")]
    EmptyInput,
    #[error("{failed} of {paths} paths were not absorbed (limit {limit})")]
    TooManyNonAbsorbed { failed: usize, paths: usize, limit: f64 },
    #[error("{0} patients is not a decision stage of the design")]
    NotDecisionStage(u32),
    #[error("not a stop state: {0}")]
    NotStopState(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
