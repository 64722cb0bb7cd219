//! Structural statistics over knowledge graphs.

mod centrality;
mod cluster;
mod community;
mod degree;
mod powerlaw;

use thiserror::Error;

use crate::graph::NodeId;

pub use centrality::{betweenness_centrality, bridging_centrality, bridging_coefficient};
pub use cluster::{cluster_report, Cluster, ClusterOptions, ClusterReport, NearNode, NEAREST_PER_CLUSTER};
pub use community::{
    community_report, detect_communities, modularity, CommunityMethod, CommunityPartition,
    CommunityReport, CommunitySummary, GIRVAN_NEWMAN_MAX_NODES, REPORT_TOP_NODES,
};
pub use degree::{
    average_degree, avg_clustering, clustering_coefficient, degree_histogram_log1p,
    degree_sequence, degree_stats, density, DegreeStats, Histogram,
};
pub use powerlaw::{
    ccdf_rows, fit_power_law, hurwitz_zeta, zeta_sums, CcdfRow, PowerLawFit, MIN_OBSERVATIONS,
    MIN_TAIL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { got: usize, need: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("not a partition of the node set: {0}")]
    NotAPartition(String),
    #[error("graph has {nodes} nodes, above the limit of {limit}; {hint}")]
    GraphTooLarge {
        nodes: usize,
        limit: usize,
        hint: &'static str,
    },
}
