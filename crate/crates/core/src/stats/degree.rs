use serde::{Deserialize, Serialize};

use crate::graph::{KnowledgeGraph, NodeId};
use crate::scalar::Scalar;

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats<T> {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_degree: T,
    pub max_degree: usize,
    pub min_degree: usize,
    /// Lower middle element for an even node count.
    pub median_degree: usize,
    pub density: T,
}

/// `2E / N`.
pub fn average_degree<T: Scalar>(nodes: usize, edges: usize) -> T {
    T::from_count(2 * edges) / T::from_count(nodes)
}

/// `2E / (N (N - 1))`, or zero below two nodes.
pub fn density<T: Scalar>(nodes: usize, edges: usize) -> T {
    if nodes < 2 {
        return T::zero();
    }
    T::from_count(2 * edges) / (T::from_count(nodes) * T::from_count(nodes - 1))
}

pub fn degree_sequence(graph: &KnowledgeGraph) -> Vec<usize> {
    graph.node_ids().map(|id| graph.degree(id)).collect()
}

pub fn degree_stats<T: Scalar>(graph: &KnowledgeGraph) -> Result<DegreeStats<T>, StatsError> {
    if graph.is_empty() {
        return Err(StatsError::EmptyGraph);
    }
    let mut degrees = degree_sequence(graph);
    degrees.sort_unstable();
    let (n, e) = (graph.node_count(), graph.edge_count());
    Ok(DegreeStats {
        node_count: n,
        edge_count: e,
        avg_degree: average_degree(n, e),
        max_degree: degrees[n - 1],
        min_degree: degrees[0],
        median_degree: degrees[(n - 1) / 2],
        density: density(n, e),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    /// `bins + 1` edges spanning `[log1p(min), log1p(max)]`.
    pub edges: Vec<T>,
    pub counts: Vec<usize>,
}

impl<T: Scalar> Histogram<T> {
    /// Bin holding `value`; the last bin is closed on the right.
    pub fn bin_of(&self, value: T) -> Option<usize> {
        let bins = self.counts.len();
        let (lo, hi) = (self.edges[0], self.edges[bins]);
        if value < lo || value > hi {
            return None;
        }
        // index of the last edge <= value, capped at the last bin
        let upper = self.edges.partition_point(|&e| e <= value);
        Some((upper.max(1) - 1).min(bins - 1))
    }
}

/// Histogram of `log1p(degree)` over every node.
pub fn degree_histogram_log1p<T: Scalar>(
    graph: &KnowledgeGraph,
    bins: usize,
) -> Result<Histogram<T>, StatsError> {
    if graph.is_empty() {
        return Err(StatsError::EmptyGraph);
    }
    if bins == 0 {
        return Err(StatsError::InvalidArgument("bins must be at least 1".into()));
    }
    let values: Vec<T> = degree_sequence(graph)
        .into_iter()
        .map(|d| T::from_count(d).ln_1p())
        .collect();
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let width = (hi - lo) / T::from_count(bins);
    let mut edges: Vec<T> = (0..bins).map(|i| lo + width * T::from_count(i)).collect();
    edges.push(hi);
    let mut hist = Histogram {
        edges,
        counts: vec![0; bins],
    };
    for v in values {
        let bin = hist.bin_of(v).expect("value within range");
        hist.counts[bin] += 1;
    }
    Ok(hist)
}

fn triangles_at(graph: &KnowledgeGraph, node: NodeId) -> usize {
    let neighbors: Vec<NodeId> = graph.neighbors(node).collect();
    let mut count = 0;
    for (i, &a) in neighbors.iter().enumerate() {
        for &b in &neighbors[i + 1..] {
            if graph.has_edge(a, b) {
                count += 1;
            }
        }
    }
    count
}

/// Fraction of neighbor pairs that are adjacent; zero below degree two.
pub fn clustering_coefficient<T: Scalar>(
    graph: &KnowledgeGraph,
    node: NodeId,
) -> Result<T, StatsError> {
    if !graph.contains(node) {
        return Err(StatsError::UnknownNode(node));
    }
    let d = graph.degree(node);
    if d < 2 {
        return Ok(T::zero());
    }
    let pairs = d * (d - 1) / 2;
    Ok(T::from_count(triangles_at(graph, node)) / T::from_count(pairs))
}

pub fn avg_clustering<T: Scalar>(graph: &KnowledgeGraph) -> T {
    if graph.is_empty() {
        return T::zero();
    }
    let total: T = graph
        .node_ids()
        .map(|id| clustering_coefficient::<T>(graph, id).expect("node exists"))
        .sum();
    total / T::from_count(graph.node_count())
}
