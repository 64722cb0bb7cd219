//! Knowledge-graph construction, analysis and reasoning.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases below pin the precisions used by the command-line tools.

pub mod adjacency;
pub mod embedding;
pub mod graph;
pub mod iso;
pub mod paths;
pub mod scalar;
pub mod stats;

pub use embedding::{
    cosine_similarity, embed_nodes, match_nodes, similarity_merge_groups, EmbedOptions,
    EmbeddingError, EmbeddingProvider, EmbeddingVector, HashEmbedder, NodeEmbeddingIndex,
    NodeMatch,
};
pub use graph::{
    build_from_triples, compose, connected_components, giant_component, merge_nodes,
    prune_small_components, GraphError, KnowledgeGraph, MergeGroup, NodeId, Triple,
};
pub use iso::{
    enumerate_candidates, find_isomorphic_subgraphs, mapping_report, verify_mapping, IsoConstraints,
    IsoError, IsoMapping, IsoSearch,
};
pub use paths::{
    assemble_context, expand_subgraph, find_paths, merge_paths, serialize_path, shortest_path,
    ContextDocument, GraphPath, PathBundle, PathError, PathQuery, ReasoningPath,
};
pub use scalar::Scalar;
pub use stats::StatsError;

/// Single-precision embedding, the storage type for node indexes.
pub type Embedding = EmbeddingVector<f32>;
pub type EmbeddingIndex = NodeEmbeddingIndex<f32>;
pub type Match = NodeMatch<f32>;

pub type Stats = stats::DegreeStats<f64>;
pub type Fit = stats::PowerLawFit<f64>;
pub type Partition = stats::CommunityPartition<f64>;
pub type Bundle = paths::PathBundle<f32>;
