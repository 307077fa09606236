//! Second-order memristor CNN cell model and phase-plane toolkit.
//!
//! [`cell`] and [`memristor`] hold the equations, [`phase`] the static
//! analyses, [`trajectory`] the integrators, [`export`] and [`render`] the
//! output formats. [`config`] and [`analysis`] tie them to the JSON run
//! configuration used by the `mcnn` binary and the HTTP service.

pub mod analysis;
pub mod cell;
pub mod config;
pub mod error;
pub mod export;
pub mod memristor;
pub mod phase;
pub mod render;
pub mod trajectory;

pub use analysis::{build_portrait, Analysis, FrozenState};
pub use config::{AnalysisRequest, RunConfig};
pub use error::{ConfigError, Error, ModelError, Result};
