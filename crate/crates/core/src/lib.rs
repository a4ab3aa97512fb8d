//! Desk-scale laboratory for unsupervised pre-training experiments.
//!
//! The crate provides:
//! - dense linear algebra primitives ([`matrix`]),
//! - MLP and residual self-attention models with manual reverse-mode
//!   gradients ([`models`]),
//! - context-encoder / masked-autoencoder pre-training, linear-head
//!   fine-tuning, and an end-to-end gradient-descent experiment with
//!   weight-drift tracking ([`pretrain`], [`endtoend`]),
//! - empirical representation-induced Rademacher complexity estimation and
//!   its use as a pre-training regularizer ([`radreg`]),
//! - the stochastic gradient descent-ascent loop with Moreau-envelope
//!   stationarity diagnostics ([`minimax`]),
//! - closed-form generalization-bound evaluators with empirical verifiers
//!   ([`bounds`]),
//! - deterministic synthetic task generation ([`synth`]).

pub mod bounds;
pub mod endtoend;
pub mod error;
pub mod masking;
pub mod matrix;
pub mod minimax;
pub mod models;
pub mod pretrain;
pub mod radreg;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
