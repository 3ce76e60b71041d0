//! Multilevel graph embedding.
//!
//! The input graph is coarsened into a hierarchy of smaller graphs, the
//! smallest one is embedded first, and each embedding is projected onto the
//! next finer level and refined there. Levels that do not fit the memory
//! budget are trained part by part.

pub mod coarsening;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod generators;
pub mod graph;
pub mod partition;
pub mod pipeline;
pub mod preset;
pub mod rng;
pub mod sampling;
pub mod split;
pub mod trainer;

pub use coarsening::{coarsen, CoarseningConfig, CoarseningResult, Heuristics, LevelMapping};
pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use graph::{density, load_edge_list, Graph, LoadedGraph, VertexId};
pub use pipeline::{embed_multilevel, EmbedConfig, EmbedReport};
pub use preset::{GraphScale, Preset};
pub use split::{split_link_pred, LinkPredSplit};
pub use trainer::{Execution, SamplerKind, TrainConfig};
