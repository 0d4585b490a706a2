//! Files, configuration and experiment orchestration on top of `ppde-core`.
//!
//! * [`io`]: binary dataset and network checkpoint formats.
//! * [`config`]: JSON experiment configuration.
//! * [`harness`]: training runs, scaling and sample-size studies, CSV output.

pub mod config;
mod error;
pub mod harness;
pub mod io;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use ppde_core as core;
