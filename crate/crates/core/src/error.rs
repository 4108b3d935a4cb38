use std::path::PathBuf;

use crate::grid::ScalarField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid would need {nodes} nodes, budget is {budget}")]
    BudgetExceeded { nodes: usize, budget: usize },
    #[error("domain contains no interior node at this spacing")]
    EmptyDomain,
    #[error("interior nodes form {components} connected components")]
    DisconnectedDomain { components: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value in field at node {node}")]
    NonFinite { node: usize },

    #[error("linear solver diverged after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Box<ScalarField>,
    },
    #[error("degenerate condenser: {0}")]
    DegenerateCondenser(String),
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("field is identically zero")]
    ZeroField,
    #[error("field has no positive level (max |u| = 0)")]
    FlatField,
    #[error("dimension {0} is not supported here")]
    DimensionUnsupported(usize),
    #[error("level set at t = {t} has zero gradient measure")]
    DegenerateLevels { t: f64 },

    #[error("configuration error: {0}")]
    ConfigurationError(String),
    #[error("shape not supported: {0}")]
    ShapeUnsupported(String),

    #[error("cone opening {eps:e} at vertex distance {vertex:.4} is below grid resolution (needs eps*vertex >= {needed:e})")]
    ResolutionTooCoarse { eps: f64, vertex: f64, needed: f64 },
    #[error("star-shape certificate failed on segment {from:?} -> {to:?}")]
    StarshapeFailed { from: Vec<f64>, to: Vec<f64> },
    #[error("nearest-neighbour spacing {realized:?} outside band [{lo}, {hi}] (scaled by N)")]
    SpacingViolated { realized: (f64, f64), lo: f64, hi: f64 },
    #[error("trend violated: {0}")]
    TrendViolated(String),

    #[error("search needs {needed} evaluations, budget is {budget}")]
    SearchBudgetExceeded { needed: usize, budget: usize },
    #[error("quadrature unstable: {0}")]
    QuadratureUnstable(String),
    #[error("integral is not finite: {0}")]
    NonIntegrable(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("schema mismatch in {path}: expected {expected}, found {found}")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
