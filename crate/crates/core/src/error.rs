use thiserror::Error;

/// Errors raised by the solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FbpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular step at node {node}: |1 - w*k| = {margin:.3e}")]
    SingularStep { node: usize, margin: f64 },

    #[error("series oracle does not converge: remainder bound {bound:.3e} exceeds {tolerance:.1e}")]
    SeriesConvergence { bound: f64, tolerance: f64 },

    #[error("curve leaves the Lipschitz class: seminorm {seminorm:.6} > budget {budget:.6}")]
    CurveClass { seminorm: f64, budget: f64 },

    #[error("Lipschitz budget exceeded by K[L]: seminorm {seminorm:.6} > A = {budget:.6}")]
    Budget { seminorm: f64, budget: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {last_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("invalid initial datum: {0}")]
    InvalidDatum(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FbpError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(FbpError::Domain(msg.into()))
}
