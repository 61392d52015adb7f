//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// `|y|^a` cannot be evaluated at `y = 0` for negative `a`.
    #[error("singular evaluation: |y|^a at y=0 with a={a} < 0")]
    SingularEvaluation { a: f64 },

    /// `y^a` is not locally integrable at `y = 0` unless `a > -1`.
    #[error("weight y^{a} is not integrable on a cell touching y=0")]
    NonIntegrable { a: f64 },

    #[error("invalid weight spec: {0}")]
    InvalidWeight(String),

    /// A theorem hypothesis required by the operation does not hold.
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("grid too large: {nodes} space-time nodes exceeds 10^8")]
    GridTooLarge { nodes: u128 },

    #[error("region out of bounds: {0}")]
    OutOfBounds(String),

    #[error("region contains no cells: {0}")]
    DegenerateRegion(String),

    #[error("field/grid mismatch: {0}")]
    FieldMismatch(String),

    #[error("coefficient matrix violates ellipticity at node {node}: eig range [{lo}, {hi}] vs declared [{lambda}, {big_lambda}]")]
    EllipticityViolation {
        node: usize,
        lo: f64,
        hi: f64,
        lambda: f64,
        big_lambda: f64,
    },

    #[error("coefficient matrix not symmetric at node {node}")]
    NotSymmetric { node: usize },

    #[error("time-derivative factor must be positive everywhere; min {min}")]
    NonPositiveFactor { min: f64 },

    #[error("inconsistent Dirichlet trace at node {node}: {lhs} vs {rhs}")]
    InconsistentTrace { node: usize, lhs: f64, rhs: f64 },

    #[error("linear solver did not converge: {iters} iterations, relative residual {residual:.3e}")]
    SolverDiverged { iters: usize, residual: f64 },

    #[error("Steklov window exceeds the time interval")]
    WindowExceedsInterval,

    #[error("need at least {need} dyadic scales, region resolves {got}")]
    TooFewScales { got: usize, need: usize },

    #[error("data not normalized: ||f||_p + ||F||_q = {norm} > 1")]
    NonNormalizedData { norm: f64 },

    #[error("flattened distance ratio not bounded below: min delta/y = {min}")]
    MuBoundViolation { min: f64 },

    #[error("evaluation outside tabulated range: y = {y}, range [{lo}, {hi}]")]
    OutsideTabulation { y: f64, lo: f64, hi: f64 },

    #[error("unsupported parameter combination: {0}")]
    Unsupported(String),

    #[error("rhs is zero while lhs = {lhs}; conservation bug")]
    ZeroRhs { lhs: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
