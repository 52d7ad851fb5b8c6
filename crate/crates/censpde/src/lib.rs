//! File formats, pipelines and command-line interface around `censpde-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod io;
pub mod meshio;

pub use censpde_core as core;
pub use error::{CliError, Result};
