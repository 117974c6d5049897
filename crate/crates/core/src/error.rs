use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid physical parameters or geometry description.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A linear or nonlinear solve failed; `residual` is the last residual measure seen.
    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    /// Domain map or mesh generation rejected the requested perturbation.
    #[error("perturbation too large: {0}")]
    PerturbationTooLarge(String),

    /// Triangulation failed a quality check.
    #[error("meshing error: {0}")]
    Meshing(String),

    /// A frozen Jacobian mode is (numerically) zero.
    #[error("Jacobian not invertible: mode {k} has |s_k'(1)| = {value:.3e}")]
    NotInvertible { k: usize, value: f64 },

    /// Quasi-Newton iterates left the contraction regime.
    #[error("outside the implicit-function neighborhood after {iterations} iterations; reduce ||g||")]
    Divergence { iterations: usize },

    /// A diagnostic was asked for outside its admissible region.
    #[error("inadmissible request: {0}")]
    Inadmissible(String),

    /// Laplace transform tail or head bound exceeded.
    #[error("transform resolution: {0}")]
    Transform(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            residual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
