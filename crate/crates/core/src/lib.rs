//! Industrial pollution-load estimation and a small neural-network toolkit
//! for predicting those loads.
//!
//! [`ipps`] turns sector activity and intensity coefficients into loads.
//! [`dataset`] encodes sector/year rows for training. [`network`] and
//! [`trainer`] provide five topologies (MLP, GFFN, RBF, TLRN, RN) trained by
//! gradient descent with momentum, and [`bench`] compares them over a grid
//! of depths and restarts.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod ipps;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
