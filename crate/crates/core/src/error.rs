use thiserror::Error;

#[derive(Debug, Error)]
pub enum HhoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("mesh parse error (line {line}): {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported element type {0}")]
    UnsupportedElement(u32),

    #[error("face shared by {count} cells (hanging node or non-manifold mesh)")]
    NonConforming { count: usize },

    #[error("degenerate cell {cell}: measure {measure:e} below threshold {threshold:e}")]
    DegenerateCell {
        cell: usize,
        measure: f64,
        threshold: f64,
    },

    #[error("quadrature order {requested} not available (max {max})")]
    QuadratureOrder { requested: usize, max: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("non-positive Jacobian det F = {det:e}")]
    NonPositiveJacobian { det: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton did not converge: {0}")]
    NonConvergence(String),

    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, HhoError>;
