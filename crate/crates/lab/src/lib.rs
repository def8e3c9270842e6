//! CLI front end for fracperim-core: experiment configuration,
//! orchestration, and reproducible artifact persistence.
//!
//! Each run resolves a line-oriented config file, computes its artifacts in
//! memory, and writes them together with a manifest that embeds the fully
//! resolved configuration. [`verify::verify`] replays any manifest and
//! reports per-column deviations, which are zero for fixed seeds regardless
//! of the worker thread count.

pub mod config;
pub mod error;
pub mod run;
pub mod verify;

pub use error::LabError;
