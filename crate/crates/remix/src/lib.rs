//! Mixing regularizers for class-imbalanced classification.
//!
//! The crate implements a family of pair-mixing operators (mixup, cutmix,
//! manifold mixup) together with their imbalance-aware "remix" variants,
//! which decouple the feature-space mixing factor from the label-space one
//! and push mixed labels toward minority classes.
//!
//! Around the operators it provides the machinery to study them end to end
//! at desk scale:
//!
//! - [`imbalance`]: long-tailed and step class-size construction,
//!   effective-number re-weighting, weighted re-sampling, and deferred
//!   (train-plain-first) schedules.
//! - [`model`]: a small fully connected classifier with manual
//!   backpropagation, soft-label cross entropy, and SGD with momentum,
//!   weight decay, and milestone learning-rate decay.
//! - [`data`]: toy 2-D dataset generators and a CIFAR-10 binary loader.
//! - [`train`]: the training loop, evaluation, decision-boundary rasters,
//!   and a τ sweep harness; all outputs are plain files.
//!
//! Every stochastic step draws from an explicitly seeded stream
//! ([`rng`]), so any run reproduces bit-for-bit given its seed. With the
//! `parallel` feature (on by default) evaluation, rasters, and sweep cells
//! fan out over rayon; a sequential fallback compiles without it and
//! produces identical results.

pub mod data;
pub mod error;
pub mod imbalance;
pub mod mixing;
pub mod model;
pub mod model_io;
pub mod par;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
