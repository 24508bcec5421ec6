//! File formats, the training-data pipeline and helpers behind the `ppp`
//! command line tool.
//!
//! The numerical work is done by [`ppp_core`]; this crate adds parallel,
//! reproducible data generation, a cache of correlation factors shared
//! between threads, and the on-disk formats for point patterns, training sets
//! and trained networks.

pub mod cache;
pub mod config;
pub mod dataset;
mod error;
pub mod io;
pub mod model_file;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
