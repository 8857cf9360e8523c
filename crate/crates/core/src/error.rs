use thiserror::Error;

/// Errors surfaced by the guidance stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate guidance frame: {0}")]
    DegenerateFrame(String),

    #[error("integration produced non-finite state at t = {0}")]
    NonFiniteState(f64),

    #[error("singular guidance system: {0}")]
    SingularSystem(String),

    #[error("time-to-go {0} below one guidance cycle")]
    NearTerminal(f64),

    #[error("insufficient data: need at least {need}, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("solver failed to converge after {0} iterations")]
    NonConvergence(usize),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("degenerate conic: quadratic part is zero")]
    DegenerateConic,

    #[error("degenerate conic center: B^2 - 4AC is numerically zero")]
    DegenerateCenter,

    #[error("conic boundary passes through its own centroid (lambda = 0)")]
    ZeroLambda,

    #[error("no feasible perturbation within the search bounds")]
    NoFeasiblePerturbation,

    #[error("reduced state undefined: v and w must be positive (v = {v}, w = {w})")]
    UndefinedReduction { v: f64, w: f64 },

    #[error("horizontal line s2 = {0} does not intersect the boundary")]
    NoHorizontalIntersection(f64),

    #[error("retargeting infeasible: {0}")]
    RetargetInfeasible(String),

    #[error("model artifact missing: {0}")]
    MissingModels(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {file}: {msg}")]
    Parse { file: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
