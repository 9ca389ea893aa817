//! Random dot product graph inference.
//!
//! Sampling from latent position models, adjacency / Laplacian / directed /
//! omnibus spectral embeddings, closed-form limit laws, Chernoff-information
//! comparison of embeddings, and one- and two-sample graph hypothesis tests.

pub mod error;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod limits;
pub mod cluster;
pub mod embedding;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod testing;

pub use embedding::{Embedding, EmbeddingKind};
pub use error::{RdpgError, Result};
pub use graph::{Graph, ProbabilityMatrix};
pub use model::{LatentPositionModel, MixtureSpec};
pub use rng::SeedStream;
