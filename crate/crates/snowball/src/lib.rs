//! File formats, configuration, run manifests, a thread-pool executor and
//! the `snowball` command line around [`snowball_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embstore;
mod error;
pub mod jsonl;
pub mod manifest;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
pub use snowball_core as core;
