use thiserror::Error;

/// Failure to evaluate the cell or memristor equations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("memristor state {n_d:e} outside [{min:e}, {max:e}]")]
    StateOutOfRange { n_d: f64, min: f64, max: f64 },
    #[error("non-finite derivative at v_c={v_c}, n_d={n_d:e}")]
    NonFinite { v_c: f64, n_d: f64 },
}

/// A configuration value violating an invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending field, e.g. `grid.v_c_samples`.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(Box<crate::trajectory::SimulationError>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
