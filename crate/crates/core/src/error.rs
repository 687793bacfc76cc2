use thiserror::Error;

/// Errors raised by the modelling toolkit.
#[derive(Debug, Error)]
pub enum RomError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter value {rho} outside grid range [{min}, {max}]")]
    OutOfRange { rho: f64, min: f64, max: f64 },

    #[error("rank deficiency: index {index} requested but numerical rank is {rank} ({context})")]
    Rank {
        index: usize,
        rank: usize,
        context: String,
    },

    #[error("trim did not settle within {steps} steps (last increment norm {residual:e})")]
    NotSettled { steps: usize, residual: f64 },

    #[error("gramian is not positive semidefinite: eigenvalue {min_eig:e} below tolerance {tol:e}")]
    Gramian { min_eig: f64, tol: f64 },

    #[error("oblique projection breakdown at grid point {grid_index}: {detail}")]
    Projection { grid_index: usize, detail: String },

    #[error("plant unstable: spectral radius {radius} at grid point {grid_index}")]
    Unstable { grid_index: usize, radius: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<V> = std::result::Result<V, RomError>;

pub(crate) fn dim_err<V>(msg: impl Into<String>) -> Result<V> {
    Err(RomError::Dimension(msg.into()))
}
