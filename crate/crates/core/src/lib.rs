//! Keypoint-stream forecasting and predictive transmission.
//!
//! The crate trains three forecasters over 60-dimensional keypoint frames
//! (a recurrent network, a lag-conditioned VAE and a variational recurrent
//! network), runs them inside a block-alternating send/predict transmission
//! simulator, and measures bandwidth saved against reconstruction error.
//!
//! Module map:
//!
//! - [`keypoint`]: frames, sequences, file formats, normalization, synthetic data
//! - [`numeric`]: tensors, Gaussians, the gradient tape, Adam, gradient checks
//! - [`predictor`]: the RNN, VAE and VRNN forecasters plus baselines
//! - [`protocol`]: block schedule, wire codec, sender/receiver simulation
//! - [`eval`]: metrics, experiment grids and report files
//! - [`cli`]: the `generate`/`train`/`simulate`/`report` commands
//! - [`kv`]: the `key=value` format of configs and manifests

pub mod cli;
pub mod error;
pub mod eval;
pub mod keypoint;
pub mod kv;
pub mod numeric;
pub mod predictor;
pub mod protocol;

pub use error::{Error, Result};
