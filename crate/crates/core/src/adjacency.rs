//! Dense, index-addressed adjacency view used by the graph algorithms.

use std::collections::HashMap;

use crate::graph::{KnowledgeGraph, NodeId};

/// Snapshot of a graph with nodes renumbered `0..n` in id order.
#[derive(Debug, Clone)]
pub struct DenseAdjacency {
    pub ids: Vec<NodeId>,
    pub position: HashMap<NodeId, usize>,
    /// Sorted neighbor indices per node.
    pub neighbors: Vec<Vec<usize>>,
}

impl DenseAdjacency {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let ids: Vec<NodeId> = graph.node_ids().collect();
        let position: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let neighbors = ids
            .iter()
            .map(|id| graph.neighbors(*id).map(|n| position[&n]).collect())
            .collect();
        Self {
            ids,
            position,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn degree(&self, index: usize) -> usize {
        self.neighbors[index].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }
}
