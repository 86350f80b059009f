//! Standard-library companion to `rankfuse-core`: the MMSEQ dataset format,
//! model checkpoints, `key=value` configuration, atomic CSV output, the
//! experiment grid runners and the `rankfuse` command-line driver.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv_out;
pub mod error;
pub mod experiment;
mod fsutil;
pub mod mmseq;

pub use error::{FormatError, IoError, RunError};
pub use fsutil::write_atomic;
