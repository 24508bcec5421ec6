//! Simulation-based parameter estimation for planar point processes.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the numerical parts:
//!
//! * [`geometry`]: rectangular windows, point patterns, and neighbour queries.
//! * [`simulate`]: Poisson, log-Gaussian Cox, Strauss and LGCP-Strauss samplers.
//! * [`sumstats`]: edge-corrected `K`, centred `L`, and Kaplan–Meier `F`, `G`, `J`.
//! * [`nn`]: a small 1-D convolutional regression network trained with Adam.
//! * [`baselines`]: minimum contrast and profile maximum pseudo-likelihood.
//! * [`envelopes`]: extreme rank length global envelopes and tests.
//!
//! File formats, the command line tool and the training-data pipeline live in
//! the companion `ppp` crate.
#![no_std]

extern crate alloc;

pub mod baselines;
pub mod envelopes;
mod error;
pub mod geometry;
pub mod linalg;
pub mod nn;
pub mod simulate;
pub mod sumstats;

pub use error::{Error, Result};
pub use geometry::{Point, PointPattern, Window};
