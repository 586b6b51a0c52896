use thiserror::Error;

use crate::graph::VariableId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("non-finite tangent component")]
    NonFinite,
    #[error("gimbal lock: pitch {pitch} is within tolerance of ±π/2")]
    GimbalLock { pitch: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("variable {0} is not in the graph")]
    MissingVariable(VariableId),
    #[error("invalid information matrix: {0}")]
    InvalidInfo(String),
    #[error("invalid match statistics: {0}")]
    InvalidStats(String),
    #[error("scale variable {0} is used by more than one factor")]
    ScaleReused(usize),
    #[error("graph has no anchor prior and no gauge-fix flag")]
    NotGaugeFixed,
    #[error("factor {index} is malformed: {reason}")]
    MalformedFactor { index: usize, reason: String },
    #[error("scale variable {0} is not referenced by any factor")]
    UnusedScale(usize),
    #[error("values do not match the graph layout")]
    ValuesMismatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("Cholesky factorization of the normal equations failed")]
    SingularHessian,
    #[error("pose graph is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("orientation cost needs at least one binary edge")]
    EmptyEdgeSet,
    #[error("mean edge translation is zero")]
    AllZeroTranslations,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("episode budget exhausted")]
    EpisodeOver,
    #[error("edge index {0} is out of range")]
    InvalidEdge(usize),
    #[error("refinement needs a planar graph")]
    NonPlanarGraph,
    #[error(transparent)]
    Cost(#[from] SolveError),
    #[error("policy file: {0}")]
    PolicyFormat(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadianceError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (usize, usize), actual: (usize, usize) },
    #[error("invalid water parameters: {0}")]
    InvalidParams(String),
    #[error("invalid image data: {0}")]
    InvalidImage(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("degenerate layout: {0}")]
    DegenerateLayout(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("document mixes SE2 and SE3 records")]
    MixedDimension,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Radiance(#[from] RadianceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} poses, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("ground-truth path length is zero")]
    ZeroPathLength,
}
