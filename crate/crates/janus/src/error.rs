use thiserror::Error;

/// Library-wide error type.
///
/// Variants split into geometry/validation failures (bad inputs, violated
/// hypotheses) and numerical failures (no convergence, degenerate spectra).
/// The CLI maps the former to exit code 1 and the latter to exit code 2.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("regions overlap: cell {cell} matches both local and nonlocal predicates")]
    Overlap { cell: usize },

    #[error("set is not delta-connected for delta = {delta}: {} components", components.len())]
    NotDeltaConnected {
        delta: f64,
        components: Vec<Vec<usize>>,
    },

    #[error("horizon too small: delta/(2*sqrt(N)) = {limit} is below the cell width h = {h}")]
    HorizonTooSmall { limit: f64, h: f64 },

    #[error("interface selector matched no boundary face")]
    EmptyInterface,

    #[error("fractional order s = {0} outside (0, 1)")]
    InvalidOrder(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "incompatible source: weighted sum {sum:.3e} exceeds tolerance {tol:.3e} \
         (Neumann problems require a mean-zero load)"
    )]
    IncompatibleSource { sum: f64, tol: f64 },

    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("problem size {n} exceeds the dense-path limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("degenerate null space: second eigenvalue {0:.3e} is numerically zero")]
    DegenerateNullSpace(f64),

    #[error("branch sequence is empty")]
    EmptyBranch,

    #[error(
        "horizon violation: diam(A \u{222a} B) = {diam} must be < 2*delta = {limit} \
         for the coupling sets"
    )]
    HorizonViolation { diam: f64, limit: f64 },

    #[error("unknown model for this operation: {0}")]
    UnknownModel(String),

    #[error("negative jump rate at ({i}, {j}): off-diagonal entry {value} is positive")]
    NegativeRate { i: usize, j: usize, value: f64 },

    #[error("constraint subset is empty")]
    EmptySubset,
}

pub type Result<T> = std::result::Result<T, Error>;
