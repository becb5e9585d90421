use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("boundary classification failed: {0}")]
    Boundary(String),

    #[error("point ({x}, {y}) lies outside element {elem}")]
    OutsideElement { elem: usize, x: f64, y: f64 },

    #[error("invalid parameter `{key}`: {reason}")]
    Parameter { key: String, reason: String },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("line search exhausted {halvings} halvings at Newton iteration {iteration} (residual {residual:e})")]
    LineSearch {
        iteration: usize,
        halvings: usize,
        residual: f64,
    },

    #[error("Newton did not converge in {iterations} iterations (relative residual {relative:e})")]
    NewtonDiverged { iterations: usize, relative: f64 },

    #[error("flux limiter hit the iteration cap {cap} (max residual flux {max_flux:e})")]
    LimiterCap { cap: usize, max_flux: f64 },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("vtk: {0}")]
    Vtk(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
