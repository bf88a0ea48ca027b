//! Genetic search over feed-forward collaborative-filtering networks.
//!
//! Each candidate network is described by a variable-length [`genome::Genome`]:
//! an embedding gene, an ordered list of hidden blocks (dense + ReLU + dropout,
//! each with its own weight-initialization scheme) and a fixed one-unit
//! prediction layer. A population of genomes is evolved with simulated binary
//! crossover, polynomial mutation, a length mutation and elitist binary
//! tournament selection, using validation NDCG@K under leave-one-out
//! evaluation as fitness.
//!
//! The crate is organised bottom-up:
//!
//! - [`genome`]: encoding, random initialization, validation, records.
//! - [`operators`]: SBX, PM, crossover, mutation, tournament and environmental selection.
//! - [`network`]: decoding genomes into trainable networks, init schemes, backprop, Adam.
//! - [`evaldata`]: interaction ingestion, leave-one-out splits, HR@K / NDCG@K.
//! - [`evolution`]: the generational loop with fitness caching and checkpoints.
//! - [`config`]: flat key-value run configuration.
//! - [`synthetic`]: planted low-rank interaction generator for experiments and tests.

pub mod config;
pub mod error;
pub mod evaldata;
pub mod evolution;
pub mod genome;
pub mod network;
pub mod operators;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
