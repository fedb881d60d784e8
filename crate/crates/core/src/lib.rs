//! Online time-series forecasting with a temporal convolutional backbone
//! whose blocks are modulated by gradient-driven adapters and an
//! associative memory of past adaptations.
//!
//! Modules, bottom up:
//! - [`tensor`]: dense f64 tensors and layer primitives with paired backward passes.
//! - [`backbone`]: the dilated causal TCN forecaster.
//! - [`fsnet`]: adapters, trigger, memory and the fast-and-slow learner.
//! - [`data`]: synthetic drift streams, CSV ingestion, normalisation, windows.
//! - [`harness`]: optimiser, baselines, the online protocol and experiments.
//! - [`gradcheck`]: finite-difference verification of every backward pass.

// `!(x < y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod data;
pub mod error;
pub mod fsnet;
pub mod gradcheck;
pub mod harness;
pub mod io;
pub mod tensor;

pub use backbone::{TcnConfig, TcnState};
pub use error::{Error, Result};
pub use fsnet::{make_variant, FsnetHyperparams, FsnetLearner, Variant};
pub use harness::{ExperimentConfig, Learner, LearnerKind, OnlineTcn, RunMetrics};
pub use tensor::{Tensor, TensorError};
