//! Information-bottleneck uncertainty quantification (IB-UQ) for neural
//! function regression and DeepONet operator learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`netcore`]: reverse-mode tape, dense nets, Adam, schedules, checkpoints.
//! * [`flows`]: RealNVP coupling flows and the volume-preserving GIN variant
//!   with temperature-scaled sampling.
//! * [`ibcore`]: gated stochastic encoder, Gaussian decoder, mixup, and the
//!   Monte Carlo information-bottleneck objective.
//! * [`regression`]: end-to-end IB-UQ function regression and prediction.
//! * [`operator`]: the DeepONet variant with the bottleneck in the branch.
//! * [`datagen`]: benchmark data, Gaussian random fields, the
//!   diffusion-reaction solver, LOF scoring and dataset files.
//! * [`baselines`]: the deep-ensemble baseline.

pub mod baselines;
pub mod datagen;
mod error;
pub mod flows;
pub mod ibcore;
pub mod netcore;
pub mod operator;
pub mod regression;

pub use error::{Error, Result};
