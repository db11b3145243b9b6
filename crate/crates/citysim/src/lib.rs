//! File formats, the on-disk sensor store and the command-line runner
//! around `citysim-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod store;

pub use citysim_core;
pub use error::{Error, Result};
