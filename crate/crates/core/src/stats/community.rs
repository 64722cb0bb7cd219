//! Community detection (greedy modularity agglomeration, two-level
//! Girvan-Newman), modularity and per-community reports.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::adjacency::DenseAdjacency;
use crate::graph::{connected_components, KnowledgeGraph, NodeId};
use crate::scalar::Scalar;

use super::centrality::{betweenness_centrality, raw_edge_betweenness};
use super::degree::clustering_coefficient;
use super::StatsError;

/// Largest graph accepted by the Girvan-Newman method.
pub const GIRVAN_NEWMAN_MAX_NODES: usize = 2000;
/// Highest-degree members whose betweenness is averaged in a report.
pub const REPORT_TOP_NODES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommunityMethod {
    #[default]
    GreedyModularity,
    GirvanNewman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition<T> {
    /// Sorted by size descending, then by smallest member id.
    pub communities: Vec<BTreeSet<NodeId>>,
    pub modularity: T,
}

impl<T> CommunityPartition<T> {
    /// Community index of every node.
    pub fn membership(&self) -> BTreeMap<NodeId, usize> {
        self.communities
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |id| (*id, i)))
            .collect()
    }
}

fn sort_communities(communities: &mut [BTreeSet<NodeId>]) {
    communities.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.first().cmp(&b.first()))
    });
}

/// `Q = sum_c (e_c / m - (d_c / 2m)^2)`.
pub fn modularity<T: Scalar>(
    graph: &KnowledgeGraph,
    partition: &[BTreeSet<NodeId>],
) -> Result<T, StatsError> {
    let mut owner: HashMap<NodeId, usize> = HashMap::with_capacity(graph.node_count());
    for (i, community) in partition.iter().enumerate() {
        for &id in community {
            if !graph.contains(id) {
                return Err(StatsError::NotAPartition(format!("{id} is not in the graph")));
            }
            if owner.insert(id, i).is_some() {
                return Err(StatsError::NotAPartition(format!("{id} appears twice")));
            }
        }
    }
    if owner.len() != graph.node_count() {
        return Err(StatsError::NotAPartition(format!(
            "covers {} of {} nodes",
            owner.len(),
            graph.node_count()
        )));
    }
    let m = graph.edge_count();
    if m == 0 {
        return Ok(T::zero());
    }
    let mut intra = vec![0usize; partition.len()];
    let mut degree = vec![0usize; partition.len()];
    for edge in graph.edges() {
        let (a, b) = (owner[&edge.source], owner[&edge.target]);
        if a == b {
            intra[a] += 1;
        }
        degree[a] += 1;
        degree[b] += 1;
    }
    let m_t = T::from_count(m);
    let two_m = T::from_count(2 * m);
    Ok(intra
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| {
            let share = T::from_count(d) / two_m;
            T::from_count(e) / m_t - share * share
        })
        .sum())
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    gain: T,
    a: usize,
    b: usize,
}

impl<T: PartialOrd> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: PartialOrd> Eq for Candidate<T> {}

impl<T: PartialOrd> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for Candidate<T> {
    // max-heap: larger gain first, then smaller pair
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .partial_cmp(&other.gain)
            .unwrap_or(Ordering::Equal)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

/// State of an agglomerative merge run over a dense graph.
pub(crate) struct Agglomeration {
    pub members: Vec<Vec<usize>>,
    pub alive: Vec<bool>,
    /// Edge counts between communities.
    pub links: Vec<BTreeMap<usize, usize>>,
    pub degree: Vec<usize>,
    pub edges: usize,
}

impl Agglomeration {
    fn new(dense: &DenseAdjacency) -> Self {
        let n = dense.len();
        Self {
            members: (0..n).map(|i| vec![i]).collect(),
            alive: vec![true; n],
            links: dense
                .neighbors
                .iter()
                .map(|ns| ns.iter().map(|&j| (j, 1)).collect())
                .collect(),
            degree: (0..n).map(|i| dense.degree(i)).collect(),
            edges: dense.edge_count(),
        }
    }

    /// Modularity change from merging communities `a` and `b`.
    pub fn gain<T: Scalar>(&self, a: usize, b: usize) -> T {
        let two_m = T::from_count(2 * self.edges);
        let e = T::from_count(self.links[a].get(&b).copied().unwrap_or(0));
        let da = T::from_count(self.degree[a]) / two_m;
        let db = T::from_count(self.degree[b]) / two_m;
        T::lit(2.0) * (e / two_m - da * db)
    }

    fn merge(&mut self, keep: usize, gone: usize) -> Vec<usize> {
        let moved = std::mem::take(&mut self.members[gone]);
        self.members[keep].extend(moved);
        self.alive[gone] = false;
        self.degree[keep] += self.degree[gone];
        let gone_links = std::mem::take(&mut self.links[gone]);
        self.links[keep].remove(&gone);
        for (k, count) in gone_links {
            if k == keep {
                continue;
            }
            *self.links[keep].entry(k).or_insert(0) += count;
            let back = self.links[k].remove(&gone).unwrap_or(0);
            *self.links[k].entry(keep).or_insert(0) += back;
        }
        self.links[keep].keys().copied().collect()
    }
}

/// Clauset-Newman-Moore agglomeration: repeatedly merge the adjacent pair of
/// communities with the largest modularity gain until no merge gains.
pub(crate) fn greedy_agglomeration<T: Scalar>(dense: &DenseAdjacency) -> Agglomeration {
    let mut state = Agglomeration::new(dense);
    if state.edges == 0 {
        return state;
    }
    let mut heap = BinaryHeap::new();
    for a in 0..dense.len() {
        for &b in &dense.neighbors[a] {
            if a < b {
                heap.push(Candidate {
                    gain: state.gain::<T>(a, b),
                    a,
                    b,
                });
            }
        }
    }
    while let Some(Candidate { gain, a, b }) = heap.pop() {
        if !state.alive[a] || !state.alive[b] || !state.links[a].contains_key(&b) {
            continue;
        }
        // stale entry if the gain has changed since it was pushed
        if state.gain::<T>(a, b) != gain {
            continue;
        }
        if gain <= T::zero() {
            break;
        }
        for k in state.merge(a, b) {
            let (x, y) = (a.min(k), a.max(k));
            heap.push(Candidate {
                gain: state.gain::<T>(x, y),
                a: x,
                b: y,
            });
        }
    }
    state
}

fn greedy_modularity<T: Scalar>(graph: &KnowledgeGraph) -> Vec<BTreeSet<NodeId>> {
    let dense = DenseAdjacency::from_graph(graph);
    let state = greedy_agglomeration::<T>(&dense);
    state
        .members
        .iter()
        .zip(&state.alive)
        .filter(|(_, &alive)| alive)
        .map(|(m, _)| m.iter().map(|&i| dense.ids[i]).collect())
        .collect()
}

/// Removes highest-betweenness edges from a connected subgraph until it
/// falls apart; returns the resulting pieces.
fn girvan_newman_split<T: Scalar>(graph: &KnowledgeGraph) -> Vec<BTreeSet<NodeId>> {
    let dense = DenseAdjacency::from_graph(graph);
    let mut neighbors = dense.neighbors.clone();
    let initial = count_components(&neighbors);
    loop {
        let scores = raw_edge_betweenness::<T>(&neighbors);
        let Some((&(u, v), _)) = scores.iter().fold(None, |best: Option<(&(usize, usize), &T)>, cur| {
            match best {
                Some(b) if *b.1 >= *cur.1 => Some(b),
                _ => Some(cur),
            }
        }) else {
            break;
        };
        neighbors[u].retain(|&x| x != v);
        neighbors[v].retain(|&x| x != u);
        if count_components(&neighbors) > initial {
            break;
        }
    }
    let mut pieces = Vec::new();
    let mut seen = vec![false; neighbors.len()];
    for s in 0..neighbors.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut piece = BTreeSet::new();
        while let Some(v) = stack.pop() {
            piece.insert(dense.ids[v]);
            for &w in &neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        pieces.push(piece);
    }
    pieces
}

fn count_components(neighbors: &[Vec<usize>]) -> usize {
    let mut seen = vec![false; neighbors.len()];
    let mut count = 0;
    for s in 0..neighbors.len() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Two dendrogram levels: split every component once, then split every
/// resulting community once more. A split is kept only when it raises
/// modularity.
fn girvan_newman<T: Scalar>(graph: &KnowledgeGraph) -> Vec<BTreeSet<NodeId>> {
    let mut partition = connected_components(graph);
    for _level in 0..2 {
        let mut next = Vec::with_capacity(partition.len());
        let mut current_q: T = modularity(graph, &partition).expect("valid partition");
        for (i, community) in partition.iter().enumerate() {
            if community.len() < 2 {
                next.push(community.clone());
                continue;
            }
            let pieces = girvan_newman_split::<T>(&graph.induced_subgraph(community));
            if pieces.len() < 2 {
                next.push(community.clone());
                continue;
            }
            let mut trial: Vec<BTreeSet<NodeId>> = next.clone();
            trial.extend(pieces.iter().cloned());
            trial.extend(partition[i + 1..].iter().cloned());
            let q: T = modularity(graph, &trial).expect("valid partition");
            if q > current_q {
                current_q = q;
                next.extend(pieces);
            } else {
                next.push(community.clone());
            }
        }
        partition = next;
    }
    partition
}

pub fn detect_communities<T: Scalar>(
    graph: &KnowledgeGraph,
    method: CommunityMethod,
) -> Result<CommunityPartition<T>, StatsError> {
    let mut communities = match method {
        CommunityMethod::GreedyModularity => greedy_modularity::<T>(graph),
        CommunityMethod::GirvanNewman => {
            if graph.node_count() > GIRVAN_NEWMAN_MAX_NODES {
                return Err(StatsError::GraphTooLarge {
                    nodes: graph.node_count(),
                    limit: GIRVAN_NEWMAN_MAX_NODES,
                    hint: "use the greedy modularity method",
                });
            }
            girvan_newman::<T>(graph)
        }
    };
    sort_communities(&mut communities);
    let modularity = modularity(graph, &communities)?;
    Ok(CommunityPartition {
        communities,
        modularity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary<T> {
    pub index: usize,
    pub size: usize,
    pub avg_degree: T,
    pub avg_clustering: T,
    /// Mean betweenness of the highest-degree members.
    pub avg_betweenness_top: T,
    pub top_nodes: Vec<String>,
    pub intra_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport<T> {
    /// Ordered by size descending.
    pub communities: Vec<CommunitySummary<T>>,
    pub avg_intra_community_edges: T,
    /// Total count of edges whose endpoints sit in different communities.
    pub inter_community_edges: usize,
}

pub fn community_report<T: Scalar>(
    graph: &KnowledgeGraph,
    partition: &[BTreeSet<NodeId>],
) -> Result<CommunityReport<T>, StatsError> {
    // validates the partition
    modularity::<T>(graph, partition)?;
    let mut ordered: Vec<BTreeSet<NodeId>> = partition.to_vec();
    sort_communities(&mut ordered);
    let betweenness = betweenness_centrality::<T>(graph);
    let mut owner = HashMap::new();
    for (i, c) in ordered.iter().enumerate() {
        for id in c {
            owner.insert(*id, i);
        }
    }
    let mut intra = vec![0usize; ordered.len()];
    let mut inter = 0;
    for edge in graph.edges() {
        let (a, b) = (owner[&edge.source], owner[&edge.target]);
        if a == b {
            intra[a] += 1;
        } else {
            inter += 1;
        }
    }
    let communities = ordered
        .iter()
        .enumerate()
        .map(|(index, members)| {
            let size = T::from_count(members.len());
            let avg_degree = members
                .iter()
                .map(|&id| T::from_count(graph.degree(id)))
                .sum::<T>()
                / size;
            let avg_clustering = members
                .iter()
                .map(|&id| clustering_coefficient::<T>(graph, id).expect("member exists"))
                .sum::<T>()
                / size;
            let mut by_degree: Vec<NodeId> = members.iter().copied().collect();
            by_degree.sort_by(|&a, &b| {
                graph
                    .degree(b)
                    .cmp(&graph.degree(a))
                    .then_with(|| graph.label(a).cmp(&graph.label(b)))
            });
            by_degree.truncate(REPORT_TOP_NODES);
            let avg_betweenness_top = by_degree.iter().map(|id| betweenness[id]).sum::<T>()
                / T::from_count(by_degree.len());
            CommunitySummary {
                index,
                size: members.len(),
                avg_degree,
                avg_clustering,
                avg_betweenness_top,
                top_nodes: by_degree
                    .iter()
                    .map(|&id| graph.label(id).unwrap_or_default().to_string())
                    .collect(),
                intra_edges: intra[index],
            }
        })
        .collect();
    let avg_intra = if ordered.is_empty() {
        T::zero()
    } else {
        T::from_count(intra.iter().sum()) / T::from_count(ordered.len())
    };
    Ok(CommunityReport {
        communities,
        avg_intra_community_edges: avg_intra,
        inter_community_edges: inter,
    })
}
