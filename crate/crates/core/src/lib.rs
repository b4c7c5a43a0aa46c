//! Low-rank plus dictionary-sparse demixing `Y = X + RA` with recovery diagnostics and a
//! hyperspectral target-detection pipeline.

pub mod detect;
pub mod dict;
pub mod error;
pub mod guarantees;
pub mod hsio;
pub mod linalg;
pub mod solver;
pub mod synth;

pub use dict::Dictionary;
pub use error::{Error, Result};
pub use guarantees::GuaranteeReport;
pub use hsio::{DataMatrix, GroundTruthMask, HsCube};
pub use solver::{demix, rpca_dagger, ApgConfig, DemixResult};
