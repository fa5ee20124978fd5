//! Error taxonomy shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A mathematical precondition on the inputs is violated (non-positive
    /// conformal factor, density with zeros where a log is needed, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller misused an interface (dimension mismatch, empty ensemble,
    /// missing artifacts, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A numerical contract failed (stability bound violated, quadrature
    /// restriction exceeded, non-finite values, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A quadrature or normalization grid does not cover enough probability
    /// mass for the requested tolerance.
    #[error("coverage error: {0}")]
    Coverage(String),

    /// A field solver failed mid-run; reports the first offending cell and
    /// the simulation time.
    #[error("solver error at cell {cell} t={time}: {message}")]
    Solver {
        cell: usize,
        time: f64,
        message: String,
    },

    /// Invalid run configuration; `violations` lists every problem found.
    #[error("config error:\n{}", .violations.join("\n"))]
    Config { violations: Vec<String> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }
    pub fn usage(msg: impl Into<String>) -> Self {
        CoreError::Usage(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        CoreError::Numerical(msg.into())
    }
    pub fn coverage(msg: impl Into<String>) -> Self {
        CoreError::Coverage(msg.into())
    }
}
