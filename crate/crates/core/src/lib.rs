//! Lightweight compositional embeddings for graph-based recommendation.
//!
//! Entities (users and items) do not own embedding rows. Each one is a sparse weighted
//! sum over a small coarse codebook, and a second sparse fine codebook refines the
//! coarse rows. Assignments are learned without gradients from propagated embeddings.

pub mod assign;
pub mod codebook;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod graphkit;
pub mod numerics;
pub mod propagate;
pub mod trainer;

pub use error::{Error, Result};
