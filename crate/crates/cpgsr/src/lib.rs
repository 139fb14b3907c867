//! File formats, dataset simulation, configuration and subcommands around
//! `cpgsr-core`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradsuite;
pub mod io;

pub use error::{AppError, AppResult};
