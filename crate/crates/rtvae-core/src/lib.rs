//! Robust anomaly detection for mixed categorical/continuous tabular data.
//!
//! Variational autoencoders trained with the usual log-likelihood
//! reconstruction loss are easy to poison: a few outliers in the training set
//! contribute unbounded negative log-likelihood, drag the decoder toward
//! reconstructing them, and stop scoring as anomalous. The losses in
//! [`divergences`] replace the log-likelihood with beta-cross-entropies whose
//! per-sample influence is bounded; `beta = 0` recovers the standard losses
//! exactly, which serves as the vanilla-VAE baseline everywhere.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`] — dense matrices, a reverse-mode differentiation tape with
//!   a closed op set, and a seeded xoshiro256++ generator;
//! - [`data`] — schema documents, CSV ingestion, one-hot + z-score encoding,
//!   shuffled splits and labeled contamination;
//! - [`model`] — the encoder/decoder with per-feature output heads and the
//!   negative-log-likelihood anomaly score;
//! - [`divergences`] — the standard and robust loss terms and the total
//!   per-batch objective as a differentiable graph;
//! - [`trainer`] — minibatched Adam, early stopping on a hold-out metric,
//!   beta grid search;
//! - [`eval`] — exact Mann-Whitney AUC, synthetic data generation, and the
//!   contamination-sweep experiment harness.
//!
//! Everything randomized takes an explicit [`Rng`]; one seed determines a
//! training run bit-for-bit, across runs and thread counts.

pub mod data;
pub mod divergences;
pub mod eval;
pub mod fsio;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use data::{EncodedDataset, EncoderState, TableSchema};
pub use divergences::{Beta, LossBreakdown};
pub use eval::{ScoredSet, SweepConfig};
pub use model::{Architecture, ModelParams, TrainedModel};
pub use numerics::{Matrix, NodeId, Rng, Tape};
pub use trainer::{TrainConfig, TrainHistory};
