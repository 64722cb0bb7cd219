//! Exact shortest-path betweenness (dependency accumulation) and bridging
//! centrality.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use crate::adjacency::DenseAdjacency;
use crate::graph::{KnowledgeGraph, NodeId};
use crate::scalar::Scalar;

/// Sources handled per parallel work unit. Fixed so that the floating-point
/// summation order never depends on the thread count.
const SOURCE_CHUNK: usize = 64;

struct SingleSource<T> {
    order: Vec<usize>,
    preds: Vec<Vec<usize>>,
    sigma: Vec<T>,
}

fn single_source<T: Scalar>(neighbors: &[Vec<usize>], source: usize) -> SingleSource<T> {
    let n = neighbors.len();
    let mut order = Vec::with_capacity(n);
    let mut preds = vec![Vec::new(); n];
    let mut sigma = vec![T::zero(); n];
    let mut dist = vec![usize::MAX; n];
    sigma[source] = T::one();
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &neighbors[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] = sigma[w] + sigma[v];
                preds[w].push(v);
            }
        }
    }
    SingleSource { order, preds, sigma }
}

/// Raw (unnormalized, each unordered pair counted twice) node betweenness.
pub(crate) fn raw_node_betweenness<T: Scalar>(neighbors: &[Vec<usize>]) -> Vec<T> {
    let n = neighbors.len();
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<T>> = sources
        .par_chunks(SOURCE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![T::zero(); n];
            for &s in chunk {
                let SingleSource { order, preds, sigma } = single_source::<T>(neighbors, s);
                let mut delta = vec![T::zero(); n];
                for &w in order.iter().rev() {
                    for &v in &preds[w] {
                        delta[v] = delta[v] + sigma[v] / sigma[w] * (T::one() + delta[w]);
                    }
                    if w != s {
                        acc[w] = acc[w] + delta[w];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![T::zero(); n];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t = *t + p;
        }
    }
    total
}

/// Raw edge betweenness over an adjacency list, keyed by `(min, max)` index.
pub(crate) fn raw_edge_betweenness<T: Scalar>(
    neighbors: &[Vec<usize>],
) -> BTreeMap<(usize, usize), T> {
    let n = neighbors.len();
    let mut scores = BTreeMap::new();
    for (v, list) in neighbors.iter().enumerate() {
        for &w in list {
            if v < w {
                scores.insert((v, w), T::zero());
            }
        }
    }
    for s in 0..n {
        let SingleSource { order, preds, sigma } = single_source::<T>(neighbors, s);
        let mut delta = vec![T::zero(); n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (T::one() + delta[w]);
                let key = (v.min(w), v.max(w));
                let entry = scores.get_mut(&key).expect("edge exists");
                *entry = *entry + c;
                delta[v] = delta[v] + c;
            }
        }
    }
    scores
}

/// Normalized betweenness: pair dependencies divided by `(N-1)(N-2)/2`.
pub fn betweenness_centrality<T: Scalar>(graph: &KnowledgeGraph) -> BTreeMap<NodeId, T> {
    let dense = DenseAdjacency::from_graph(graph);
    let n = dense.len();
    let raw = raw_node_betweenness::<T>(&dense.neighbors);
    let scale = if n > 2 {
        // raw counts every unordered pair twice
        T::one() / (T::from_count(n - 1) * T::from_count(n - 2))
    } else {
        T::zero()
    };
    dense
        .ids
        .iter()
        .zip(raw)
        .map(|(id, b)| (*id, b * scale))
        .collect()
}

/// `(1/deg v) / sum over neighbors u of (1/deg u)`; zero for isolated nodes.
pub fn bridging_coefficient<T: Scalar>(graph: &KnowledgeGraph, node: NodeId) -> T {
    let d = graph.degree(node);
    if d == 0 {
        return T::zero();
    }
    let inv_sum: T = graph
        .neighbors(node)
        .map(|u| T::one() / T::from_count(graph.degree(u)))
        .sum();
    (T::one() / T::from_count(d)) / inv_sum
}

/// Betweenness times bridging coefficient for every node.
pub fn bridging_centrality<T: Scalar>(graph: &KnowledgeGraph) -> BTreeMap<NodeId, T> {
    betweenness_centrality::<T>(graph)
        .into_iter()
        .map(|(id, b)| (id, b * bridging_coefficient::<T>(graph, id)))
        .collect()
}
