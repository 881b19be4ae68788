//! Latent graph learning with denoising self-supervision.
//!
//! A graph generator (fully parameterized, MLP or diagonal MLP) proposes a
//! raw adjacency from node features, the adjacency processor turns it into a
//! non-negative symmetric normalized matrix, and two two-layer GCNs consume
//! it: a classifier trained on the labeled nodes and a denoising autoencoder
//! that reconstructs masked features. Both losses are optimized jointly.
//!
//! The [`analysis`] module quantifies supervision starvation (edges that a
//! two-layer GCN's training loss never sees) along with homophily and
//! noisy-graph recovery metrics.

pub mod adjacency;
pub mod analysis;
pub mod data_io;
pub mod error;
pub mod generators;
pub mod models;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Matrix, SparseGraph};
