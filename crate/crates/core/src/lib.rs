//! Character-level sequence models: LSTM language models, Bayesian HMMs
//! trained by Gibbs sampling, HMM-LSTM hybrids, and tools for inspecting
//! what their hidden states track.
//!
//! The numeric kernels and neural models are generic over [`Real`]; the
//! aliases below fix the scalar to `f64`, which is what samplers,
//! checkpoints and the experiment harness use.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod hmm;
pub mod hybrid;
pub mod interpret;
pub mod lstm;
pub mod numeric;

pub use error::{CheckpointError, Error, ErrorClass, Result};
pub use numeric::{DenseMatrix, RandomSource, Real};

pub type Matrix = DenseMatrix<f64>;
pub type Lstm = lstm::LstmParams<f64>;
pub type SequentialHybrid = hybrid::HybridParams<f64>;
pub type JointHybrid = hybrid::JointHybridParams<f64>;
