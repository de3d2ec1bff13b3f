//! Zero-shot out-of-distribution detection by matching precomputed image
//! embeddings against text concept prototypes.
//!
//! - [`bundle`]: embedding matrices, concept banks and the EMBF bundle format
//! - [`scoring`]: MCM and baseline detection scores
//! - [`metrics`]: threshold calibration, FPR at a target TPR, AUROC, accuracy
//! - [`theory`]: the temperature bound under which softmax scaling lowers FPR
//! - [`simulator`]: synthetic hyperspherical tasks
//! - [`cli`]: the `oodkit` command-line front end

pub mod bundle;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod report;
pub mod scoring;
pub mod simulator;
pub mod theory;

pub use error::{Error, Result};
