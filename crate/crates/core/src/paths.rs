//! Embedding-matched path sampling between concepts, path-graph views and
//! reasoning-context assembly.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{match_nodes, EmbeddingError, EmbeddingProvider, NodeEmbeddingIndex, NodeMatch};
use crate::graph::{KnowledgeGraph, NodeId};
use crate::scalar::Scalar;

pub const DEFAULT_PATH_K: usize = 2;
pub const DEFAULT_EXPANSION_HOPS: usize = 1;
pub const MAX_EXPANSION_HOPS: usize = 2;
pub const DEFAULT_SIMILARITY_FLOOR: f64 = 0.3;
pub const PATH_ARROW: &str = " --> ";

pub const CONTEXT_HEADER: &str = "You are given a set of information from a graph that describes the relationship between materials, structure, properties, and properties. You analyze these logically through reasoning.";
pub const ALTERNATIVES_INTRO: &str = "The following represent another possible combination of paths, providing different insights or complementing the primary path.";
pub const DEFAULT_INSTRUCTION: &str = "### Carefully read the paths and summarize scientific insights in several bullet points. Then be creative and propose new research ideas. Think step by step.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("embedding index does not cover the graph")]
    IndexMismatch,
    #[error("no node matches {term:?} above similarity {floor}")]
    NoMatch { term: String, floor: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no path between {0} and {1}")]
    NoPath(NodeId, NodeId),
    #[error("expansion hops must be at most {MAX_EXPANSION_HOPS}, got {0}")]
    TooManyHops(usize),
    #[error("bundle contains no paths")]
    EmptyBundle,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathQuery {
    pub term_a: String,
    pub term_b: String,
    pub k: usize,
    pub expansion_hops: usize,
    pub similarity_floor: f64,
}

impl PathQuery {
    pub fn new(term_a: impl Into<String>, term_b: impl Into<String>) -> Self {
        Self {
            term_a: term_a.into(),
            term_b: term_b.into(),
            k: DEFAULT_PATH_K,
            expansion_hops: DEFAULT_EXPANSION_HOPS,
            similarity_floor: DEFAULT_SIMILARITY_FLOOR,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_hops(mut self, hops: usize) -> Self {
        self.expansion_hops = hops;
        self
    }

    pub fn validate(&self) -> Result<(), PathError> {
        if self.k == 0 {
            return Err(PathError::InvalidQuery("k must be at least 1".into()));
        }
        if self.expansion_hops > MAX_EXPANSION_HOPS {
            return Err(PathError::TooManyHops(self.expansion_hops));
        }
        for term in [&self.term_a, &self.term_b] {
            if term.trim().is_empty() {
                return Err(PathError::InvalidQuery("search terms must not be empty".into()));
            }
        }
        Ok(())
    }
}

/// Simple path through a graph with the relation text of every hop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPath {
    pub nodes: Vec<NodeId>,
    pub labels: Vec<String>,
    pub relations: Vec<String>,
}

impl GraphPath {
    /// Number of hops.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("paths have at least one node")
    }

    /// True when the path is simple and each hop is an edge of `graph`.
    pub fn is_valid_in(&self, graph: &KnowledgeGraph) -> bool {
        let distinct: BTreeSet<_> = self.nodes.iter().collect();
        !self.nodes.is_empty()
            && distinct.len() == self.nodes.len()
            && self.relations.len() + 1 == self.nodes.len()
            && self.nodes.iter().all(|&n| graph.contains(n))
            && self.nodes.windows(2).all(|w| graph.has_edge(w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath<T> {
    pub path: GraphPath,
    /// Ranks `(i, j)` of the endpoint matches for the two terms.
    pub rank: (usize, usize),
    pub scores: (T, T),
    /// Earlier slot that produced the same node sequence, if any.
    pub duplicate_of: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSlot<T> {
    pub rank: (usize, usize),
    pub source: NodeId,
    pub target: NodeId,
    /// `None` when the endpoints are disconnected.
    pub path: Option<ReasoningPath<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle<T> {
    pub query: PathQuery,
    pub matches_a: Vec<NodeMatch<T>>,
    pub matches_b: Vec<NodeMatch<T>>,
    /// One slot per endpoint pair, ordered by rank pair.
    pub slots: Vec<PathSlot<T>>,
    pub separate_view: KnowledgeGraph,
    pub merged_view: KnowledgeGraph,
    /// Path nodes plus their neighborhoods up to `query.expansion_hops`.
    pub expanded: KnowledgeGraph,
}

impl<T> PathBundle<T> {
    pub fn paths(&self) -> impl Iterator<Item = &ReasoningPath<T>> {
        self.slots.iter().filter_map(|s| s.path.as_ref())
    }

    pub fn path_count(&self) -> usize {
        self.paths().count()
    }
}

/// Breadth-first distances from `start` over the whole graph.
fn bfs_distances(graph: &KnowledgeGraph, start: NodeId) -> std::collections::HashMap<NodeId, usize> {
    let mut dist = std::collections::HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for w in graph.neighbors(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Minimum-hop path; among equally short paths the one whose label sequence
/// is lexicographically smallest.
pub fn shortest_path(
    graph: &KnowledgeGraph,
    source: NodeId,
    target: NodeId,
) -> Result<GraphPath, PathError> {
    for id in [source, target] {
        if !graph.contains(id) {
            return Err(PathError::UnknownNode(id));
        }
    }
    let dist = bfs_distances(graph, target);
    let Some(&hops) = dist.get(&source) else {
        return Err(PathError::NoPath(source, target));
    };
    let label = |id: NodeId| graph.label(id).expect("node exists").to_string();
    let mut nodes = vec![source];
    let mut labels = vec![label(source)];
    let mut relations = Vec::with_capacity(hops);
    let mut current = source;
    for remaining in (0..hops).rev() {
        let next = graph
            .neighbors(current)
            .filter(|w| dist.get(w) == Some(&remaining))
            .min_by(|a, b| graph.label(*a).cmp(&graph.label(*b)))
            .expect("a closer neighbor exists on a shortest path");
        relations.push(graph.edge(current, next).expect("adjacent").relation.clone());
        nodes.push(next);
        labels.push(label(next));
        current = next;
    }
    Ok(GraphPath {
        nodes,
        labels,
        relations,
    })
}

fn matches_above<T: Scalar>(
    index: &NodeEmbeddingIndex<T>,
    term: &str,
    query: &PathQuery,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<NodeMatch<T>>, PathError> {
    let floor = T::lit(query.similarity_floor);
    let found: Vec<_> = match_nodes(index, term, query.k, provider)?
        .into_iter()
        .filter(|m| m.score >= floor)
        .collect();
    if found.is_empty() {
        return Err(PathError::NoMatch {
            term: term.to_string(),
            floor: query.similarity_floor,
        });
    }
    Ok(found)
}

/// Matches both terms to their top-k nodes and finds one shortest path per
/// endpoint pair, ordered `(0,0), (0,1), …, (k-1,k-1)`.
pub fn find_paths<T: Scalar>(
    graph: &KnowledgeGraph,
    index: &NodeEmbeddingIndex<T>,
    provider: &dyn EmbeddingProvider,
    query: &PathQuery,
) -> Result<PathBundle<T>, PathError> {
    query.validate()?;
    if graph.is_empty() {
        return Err(PathError::EmptyGraph);
    }
    if !index.covers(graph) {
        return Err(PathError::IndexMismatch);
    }
    let matches_a = matches_above(index, &query.term_a, query, provider)?;
    let matches_b = matches_above(index, &query.term_b, query, provider)?;

    let pairs: Vec<(usize, usize)> = (0..matches_a.len())
        .flat_map(|i| (0..matches_b.len()).map(move |j| (i, j)))
        .collect();
    let found: Vec<Option<GraphPath>> = pairs
        .par_iter()
        .map(|&(i, j)| shortest_path(graph, matches_a[i].node, matches_b[j].node).ok())
        .collect();

    let mut slots: Vec<PathSlot<T>> = Vec::with_capacity(pairs.len());
    for (&(i, j), path) in pairs.iter().zip(found) {
        let path = path.map(|path| {
            let duplicate_of = slots
                .iter()
                .filter_map(|s| s.path.as_ref())
                .find(|p| p.path.nodes == path.nodes)
                .map(|p| p.duplicate_of.unwrap_or(p.rank));
            ReasoningPath {
                path,
                rank: (i, j),
                scores: (matches_a[i].score, matches_b[j].score),
                duplicate_of,
            }
        });
        slots.push(PathSlot {
            rank: (i, j),
            source: matches_a[i].node,
            target: matches_b[j].node,
            path,
        });
    }

    let present: Vec<ReasoningPath<T>> = slots.iter().filter_map(|s| s.path.clone()).collect();
    let (separate_view, merged_view, expanded) = if present.is_empty() {
        Default::default()
    } else {
        let (separate, merged) = merge_paths(&present)?;
        let expanded = expand_subgraph(graph, present.iter().map(|p| &p.path), query.expansion_hops)?;
        (separate, merged, expanded)
    };
    Ok(PathBundle {
        query: query.clone(),
        matches_a,
        matches_b,
        slots,
        separate_view,
        merged_view,
        expanded,
    })
}

/// Induced subgraph on the path nodes and everything within `hops` of them.
pub fn expand_subgraph<'a>(
    graph: &KnowledgeGraph,
    paths: impl IntoIterator<Item = &'a GraphPath>,
    hops: usize,
) -> Result<KnowledgeGraph, PathError> {
    if hops > MAX_EXPANSION_HOPS {
        return Err(PathError::TooManyHops(hops));
    }
    let mut keep: BTreeSet<NodeId> = BTreeSet::new();
    for path in paths {
        for &n in &path.nodes {
            if !graph.contains(n) {
                return Err(PathError::UnknownNode(n));
            }
            keep.insert(n);
        }
    }
    let mut frontier: Vec<NodeId> = keep.iter().copied().collect();
    for _ in 0..hops {
        let mut next = Vec::new();
        for v in frontier {
            for w in graph.neighbors(v) {
                if keep.insert(w) {
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    Ok(graph.induced_subgraph(&keep))
}

fn rank_suffix(rank: (usize, usize)) -> String {
    format!(" [{}-{}]", rank.0, rank.1)
}

fn add_path(view: &mut KnowledgeGraph, labels: &[String], relations: &[String]) {
    let ids: Vec<NodeId> = labels
        .iter()
        .map(|l| view.add_node(l).expect("path labels are non-empty"))
        .collect();
    for (w, rel) in ids.windows(2).zip(relations) {
        if !view.has_edge(w[0], w[1]) {
            view.add_edge(w[0], w[1], rel, 1, std::iter::empty())
                .expect("distinct endpoints");
        }
    }
}

/// Builds the two path-graph views: every path with its own node copies
/// (labels suffixed `[i-j]`), and all paths with equal labels collapsed.
pub fn merge_paths<T>(
    paths: &[ReasoningPath<T>],
) -> Result<(KnowledgeGraph, KnowledgeGraph), PathError> {
    if paths.is_empty() {
        return Err(PathError::EmptyBundle);
    }
    let mut separate = KnowledgeGraph::new();
    let mut merged = KnowledgeGraph::new();
    for p in paths {
        let suffix = rank_suffix(p.rank);
        let copies: Vec<String> = p.path.labels.iter().map(|l| format!("{l}{suffix}")).collect();
        add_path(&mut separate, &copies, &p.path.relations);
        add_path(&mut merged, &p.path.labels, &p.path.relations);
    }
    Ok((separate, merged))
}

/// `label --> relation --> label --> … --> label`.
pub fn serialize_path(path: &GraphPath) -> String {
    let mut out = path.labels[0].clone();
    for (rel, label) in path.relations.iter().zip(&path.labels[1..]) {
        out.push_str(PATH_ARROW);
        out.push_str(rel);
        out.push_str(PATH_ARROW);
        out.push_str(label);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSection {
    pub rank: (usize, usize),
    pub text: String,
}

/// Reasoning prompt built from a path bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDocument {
    pub header: String,
    pub primary: ContextSection,
    /// Endpoint labels of the primary path.
    pub endpoints: (String, String),
    pub alternatives: Vec<ContextSection>,
    pub instruction: String,
}

impl fmt::Display for ContextDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, j) = self.primary.rank;
        writeln!(f, "{}\n", self.header)?;
        writeln!(f, "### Primary combination (path from {i} to {j}):\n")?;
        writeln!(f, "{}\n", self.primary.text)?;
        writeln!(
            f,
            "This represents the main combination of nodes in the knowledge graph between {} and {}.\n",
            self.endpoints.0, self.endpoints.1
        )?;
        if !self.alternatives.is_empty() {
            writeln!(f, "{ALTERNATIVES_INTRO}\n")?;
            for alt in &self.alternatives {
                let (i, j) = alt.rank;
                writeln!(f, "### Alternative combination (path from {i} to {j}):\n")?;
                writeln!(f, "{}\n", alt.text)?;
            }
        }
        write!(f, "{}", self.instruction)
    }
}

/// Lays out the bundle's paths as a primary combination and alternatives,
/// followed by `instruction`.
pub fn assemble_context<T>(
    bundle: &PathBundle<T>,
    instruction: &str,
) -> Result<ContextDocument, PathError> {
    let mut paths: Vec<&ReasoningPath<T>> = bundle.paths().collect();
    if paths.is_empty() {
        return Err(PathError::EmptyBundle);
    }
    let primary_at = paths
        .iter()
        .enumerate()
        .min_by_key(|(_, p)| (p.rank != (0, 0), p.rank.0 + p.rank.1, p.rank.0))
        .map(|(at, _)| at)
        .expect("non-empty");
    let primary = paths.remove(primary_at);
    paths.sort_by_key(|p| p.rank);
    let section = |p: &ReasoningPath<T>| ContextSection {
        rank: p.rank,
        text: serialize_path(&p.path),
    };
    Ok(ContextDocument {
        header: CONTEXT_HEADER.to_string(),
        primary: section(primary),
        endpoints: (
            primary.path.labels[0].clone(),
            primary.path.labels.last().expect("non-empty").clone(),
        ),
        alternatives: paths.into_iter().map(section).collect(),
        instruction: instruction.to_string(),
    })
}
