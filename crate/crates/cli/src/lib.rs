//! Batch front-end for soft-clamped membrane simulations: configuration,
//! pipeline orchestration, sweeps, persistence and plot output.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod store;
pub mod sweep;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pipeline::RunRecord;
