//! Data loaders, benchmark protocols, checkpoints and the `nctl` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod saliency;
pub mod selftest;

pub use error::{NctlError, Result};
