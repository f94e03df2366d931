pub mod amplitude;
pub mod approximation;
pub mod energy;
pub mod error;
pub mod etd;
pub mod fit;
pub mod linear;
pub mod models;
pub mod rd_solver;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use amplitude::{AmplitudeCoefficients, AmplitudeParams, AmplitudeState, NormalizedCoefficients};
pub use models::{ModelSpec, RDModel};
pub use rd_solver::RdState;
pub use spectral::{Field, Repr, SpectralGrid};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
