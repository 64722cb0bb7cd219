//! Labeled undirected knowledge graph with collapsed parallel edges.
//!
//! Nodes are keyed by their normalized label; repeated assertions between the
//! same pair of labels fold into one edge record whose multiplicity counts the
//! assertions and whose relation text joins the distinct relation strings.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator placed between distinct relation texts on a collapsed edge.
pub const RELATION_SEPARATOR: &str = "; ";

/// Metadata key holding the number of accepted triples behind a graph.
pub const META_TRIPLES: &str = "triple_count";
/// Metadata key holding the number of rejected triples.
pub const META_REJECTED: &str = "rejected_triples";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Lowercases and collapses all runs of whitespace into single spaces.
pub fn normalize_label(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TripleError {
    #[error("subject is empty after normalization")]
    EmptySubject,
    #[error("object is empty after normalization")]
    EmptyObject,
    #[error("subject and object are both '{0}'")]
    SelfLoop(String),
}

/// One extracted (subject, relation, object) assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_chunk: Option<String>,
}

impl Triple {
    /// Builds a triple with normalized endpoint labels and a trimmed relation.
    pub fn new(subject: &str, relation: &str, object: &str) -> Self {
        Self {
            subject: normalize_label(subject),
            relation: relation.trim().to_string(),
            object: normalize_label(object),
            source_chunk: None,
        }
    }

    pub fn with_source(mut self, chunk: impl Into<String>) -> Self {
        self.source_chunk = Some(chunk.into());
        self
    }

    pub fn validate(&self) -> Result<(), TripleError> {
        let subject = normalize_label(&self.subject);
        let object = normalize_label(&self.object);
        if subject.is_empty() {
            return Err(TripleError::EmptySubject);
        }
        if object.is_empty() {
            return Err(TripleError::EmptyObject);
        }
        if subject == object {
            return Err(TripleError::SelfLoop(subject));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("label '{0}' already belongs to another node")]
    DuplicateLabel(String),
    #[error("node id {0} already in use")]
    DuplicateId(NodeId),
    #[error("node {0} appears in more than one merge group")]
    OverlappingGroups(NodeId),
    #[error("merge group canonical {0} is not one of its members")]
    CanonicalNotMember(NodeId),
    #[error("merge group has no members")]
    EmptyGroup,
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    /// Labels of nodes that were merged into this one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

/// Collapsed undirected edge; `source < target` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub relation: String,
    pub multiplicity: u32,
    /// Chunk ids of the triples behind this edge.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub chunks: BTreeSet<String>,
}

impl Edge {
    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.source {
            self.target
        } else {
            self.source
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relation
            .split(RELATION_SEPARATOR)
            .filter(|r| !r.is_empty())
    }
}

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Appends `text` to a joined relation string unless it is already present.
pub fn append_relation(joined: &mut String, text: &str) {
    for part in text.split(RELATION_SEPARATOR) {
        let part = part.trim();
        if part.is_empty() || joined.split(RELATION_SEPARATOR).any(|r| r == part) {
            continue;
        }
        if !joined.is_empty() {
            joined.push_str(RELATION_SEPARATOR);
        }
        joined.push_str(part);
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, Node>,
    labels: BTreeMap<String, NodeId>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    edges: BTreeMap<(NodeId, NodeId), Edge>,
    next_id: u64,
    pub metadata: BTreeMap<String, String>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.metadata == other.metadata
    }
}

impl Eq for KnowledgeGraph {}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Edges in `(source, target)` order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(&id).map(|n| n.label.as_str())
    }

    /// Looks a node up by label; the query is normalized first.
    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.labels.get(&normalize_label(label)).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    /// Neighbors in id order.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency
            .get(&id)
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains_key(&edge_key(a, b))
    }

    pub fn edge(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        self.edges.get(&edge_key(a, b))
    }

    /// Id that the next newly created node will receive.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Returns the node carrying `label`, creating it if absent.
    pub fn add_node(&mut self, label: &str) -> Result<NodeId, GraphError> {
        let label = normalize_label(label);
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        if let Some(&id) = self.labels.get(&label) {
            return Ok(id);
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.insert_node_record(id, label);
        Ok(id)
    }

    /// Inserts a node under an explicit id, as when reading a stored graph.
    pub fn insert_node(&mut self, id: NodeId, label: &str) -> Result<(), GraphError> {
        let label = normalize_label(label);
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        if self.nodes.contains_key(&id) {
            return Err(GraphError::DuplicateId(id));
        }
        if self.labels.contains_key(&label) {
            return Err(GraphError::DuplicateLabel(label));
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.insert_node_record(id, label);
        Ok(())
    }

    fn insert_node_record(&mut self, id: NodeId, label: String) {
        self.labels.insert(label.clone(), id);
        self.adjacency.entry(id).or_default();
        self.nodes.insert(
            id,
            Node {
                id,
                label,
                aliases: Vec::new(),
            },
        );
    }

    pub fn add_alias(&mut self, id: NodeId, alias: &str) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        if alias != node.label && !node.aliases.iter().any(|a| a == alias) {
            node.aliases.push(alias.to_string());
        }
        Ok(())
    }

    /// Adds an assertion between two existing nodes, folding it into any
    /// existing edge record for the pair.
    pub fn add_edge(
        &mut self,
        a: NodeId,
        b: NodeId,
        relation: &str,
        multiplicity: u32,
        chunks: impl IntoIterator<Item = String>,
    ) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        for id in [a, b] {
            if !self.nodes.contains_key(&id) {
                return Err(GraphError::UnknownNode(id));
            }
        }
        let key = edge_key(a, b);
        let edge = self.edges.entry(key).or_insert_with(|| Edge {
            source: key.0,
            target: key.1,
            relation: String::new(),
            multiplicity: 0,
            chunks: BTreeSet::new(),
        });
        edge.multiplicity += multiplicity.max(1);
        append_relation(&mut edge.relation, relation);
        edge.chunks.extend(chunks);
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
        Ok(())
    }

    /// Removes a node with all incident edges, returning the removed edges.
    pub fn remove_node(&mut self, id: NodeId) -> Option<(Node, Vec<Edge>)> {
        let node = self.nodes.remove(&id)?;
        self.labels.remove(&node.label);
        let neighbors = self.adjacency.remove(&id).unwrap_or_default();
        let mut removed = Vec::with_capacity(neighbors.len());
        for other in neighbors {
            if let Some(set) = self.adjacency.get_mut(&other) {
                set.remove(&id);
            }
            if let Some(edge) = self.edges.remove(&edge_key(id, other)) {
                removed.push(edge);
            }
        }
        Some((node, removed))
    }

    /// Induced subgraph on `keep`; node ids, labels and edge records are preserved.
    pub fn induced_subgraph(&self, keep: &BTreeSet<NodeId>) -> KnowledgeGraph {
        let mut sub = KnowledgeGraph {
            next_id: self.next_id,
            metadata: self.metadata.clone(),
            ..Default::default()
        };
        for id in keep {
            if let Some(node) = self.nodes.get(id) {
                sub.labels.insert(node.label.clone(), *id);
                sub.adjacency.entry(*id).or_default();
                sub.nodes.insert(*id, node.clone());
            }
        }
        for (key, edge) in &self.edges {
            if sub.nodes.contains_key(&key.0) && sub.nodes.contains_key(&key.1) {
                sub.edges.insert(*key, edge.clone());
                sub.adjacency.entry(key.0).or_default().insert(key.1);
                sub.adjacency.entry(key.1).or_default().insert(key.0);
            }
        }
        sub
    }

    /// Sum of multiplicities over all edge records.
    pub fn total_multiplicity(&self) -> u64 {
        self.edges.values().map(|e| u64::from(e.multiplicity)).sum()
    }

    pub fn triple_count(&self) -> u64 {
        self.metadata
            .get(META_TRIPLES)
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    }

    /// Checks every structural invariant of the graph.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let degree_sum: usize = self.adjacency.values().map(BTreeSet::len).sum();
        if degree_sum != 2 * self.edges.len() {
            return Err(GraphError::Invariant(format!(
                "degree sum {degree_sum} != 2 x {} edges",
                self.edges.len()
            )));
        }
        if self.labels.len() != self.nodes.len() {
            return Err(GraphError::Invariant("labels are not unique".into()));
        }
        for ((a, b), edge) in &self.edges {
            if a == b {
                return Err(GraphError::SelfLoop(*a));
            }
            if !self.nodes.contains_key(a) || !self.nodes.contains_key(b) {
                return Err(GraphError::Invariant(format!("dangling edge {a}-{b}")));
            }
            if edge.multiplicity == 0 {
                return Err(GraphError::Invariant(format!("zero multiplicity on {a}-{b}")));
            }
        }
        Ok(())
    }

    /// Structural comparison by labels: same label set, same labeled edges
    /// with equal relation text and multiplicity. Node ids are ignored.
    pub fn same_structure(&self, other: &KnowledgeGraph) -> bool {
        let labels = |g: &KnowledgeGraph| g.labels.keys().cloned().collect::<BTreeSet<_>>();
        if labels(self) != labels(other) {
            return false;
        }
        let edges = |g: &KnowledgeGraph| {
            g.edges
                .values()
                .map(|e| {
                    let mut pair = [
                        g.nodes[&e.source].label.clone(),
                        g.nodes[&e.target].label.clone(),
                    ];
                    pair.sort();
                    (pair, e.relation.clone(), e.multiplicity)
                })
                .collect::<BTreeSet<_>>()
        };
        edges(self) == edges(other)
    }

    fn debug_check(&self) {
        debug_assert_eq!(self.check_invariants(), Ok(()));
    }
}

/// Per-triple rejection recorded while building.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub index: usize,
    pub error: TripleError,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub graph: KnowledgeGraph,
    pub rejected: Vec<Rejection>,
}

/// Builds a graph with one node per distinct label and one edge per label pair.
pub fn build_from_triples(triples: &[Triple]) -> BuildOutcome {
    let mut graph = KnowledgeGraph::new();
    let mut rejected = Vec::new();
    let mut accepted = 0u64;
    for (index, triple) in triples.iter().enumerate() {
        if let Err(error) = triple.validate() {
            rejected.push(Rejection { index, error });
            continue;
        }
        let a = graph.add_node(&triple.subject).expect("validated label");
        let b = graph.add_node(&triple.object).expect("validated label");
        graph
            .add_edge(a, b, &triple.relation, 1, triple.source_chunk.clone())
            .expect("validated endpoints");
        accepted += 1;
    }
    graph.metadata.insert(META_TRIPLES.into(), accepted.to_string());
    graph
        .metadata
        .insert(META_REJECTED.into(), rejected.len().to_string());
    graph.debug_check();
    BuildOutcome { graph, rejected }
}

fn add_counter(meta: &mut BTreeMap<String, String>, key: &str, value: &str) {
    let add: u64 = value.parse().unwrap_or(0);
    let entry = meta.entry(key.to_string()).or_insert_with(|| "0".into());
    let base: u64 = entry.parse().unwrap_or(0);
    *entry = (base + add).to_string();
}

/// Union of two graphs by label: shared labels unify, parallel edges fold
/// together with summed multiplicities and joined relation texts.
pub fn compose(first: &KnowledgeGraph, second: &KnowledgeGraph) -> KnowledgeGraph {
    let mut out = first.clone();
    let mut remap = BTreeMap::new();
    for node in second.nodes() {
        let id = out.add_node(&node.label).expect("stored labels are non-empty");
        for alias in &node.aliases {
            out.add_alias(id, alias).expect("node exists");
        }
        remap.insert(node.id, id);
    }
    for edge in second.edges() {
        out.add_edge(
            remap[&edge.source],
            remap[&edge.target],
            &edge.relation,
            edge.multiplicity,
            edge.chunks.iter().cloned(),
        )
        .expect("remapped endpoints exist and differ");
    }
    for (key, value) in &second.metadata {
        if key == META_TRIPLES || key == META_REJECTED {
            add_counter(&mut out.metadata, key, value);
        } else {
            out.metadata.entry(key.clone()).or_insert_with(|| value.clone());
        }
    }
    out.debug_check();
    out
}

/// A set of nodes to collapse onto one canonical member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub members: BTreeSet<NodeId>,
    pub canonical: NodeId,
}

impl MergeGroup {
    /// Picks the member of highest degree in `graph`, ties going to the
    /// lexicographically smallest label.
    pub fn new(
        members: impl IntoIterator<Item = NodeId>,
        graph: &KnowledgeGraph,
    ) -> Result<Self, GraphError> {
        let members: BTreeSet<NodeId> = members.into_iter().collect();
        let mut best: Option<(usize, &str, NodeId)> = None;
        for &id in &members {
            let label = graph.label(id).ok_or(GraphError::UnknownNode(id))?;
            let degree = graph.degree(id);
            let better = match best {
                None => true,
                Some((d, l, _)) => degree > d || (degree == d && label < l),
            };
            if better {
                best = Some((degree, label, id));
            }
        }
        let (_, _, canonical) = best.ok_or(GraphError::EmptyGroup)?;
        Ok(Self { members, canonical })
    }
}

/// Collapses each group onto its canonical node. Groups are validated as a
/// whole before anything changes.
pub fn merge_nodes(
    graph: &KnowledgeGraph,
    groups: &[MergeGroup],
) -> Result<KnowledgeGraph, GraphError> {
    let mut seen = BTreeSet::new();
    for group in groups {
        if group.members.is_empty() {
            return Err(GraphError::EmptyGroup);
        }
        if !group.members.contains(&group.canonical) {
            return Err(GraphError::CanonicalNotMember(group.canonical));
        }
        for &id in &group.members {
            if !graph.contains(id) {
                return Err(GraphError::UnknownNode(id));
            }
            if !seen.insert(id) {
                return Err(GraphError::OverlappingGroups(id));
            }
        }
    }

    let mut out = graph.clone();
    for group in groups {
        let canonical = group.canonical;
        for &member in group.members.iter().filter(|&&m| m != canonical) {
            let (node, edges) = out.remove_node(member).expect("validated member");
            out.add_alias(canonical, &node.label).expect("canonical kept");
            for alias in &node.aliases {
                out.add_alias(canonical, alias).expect("canonical kept");
            }
            for edge in edges {
                let other = edge.other(member);
                if other == canonical {
                    continue;
                }
                out.add_edge(
                    canonical,
                    other,
                    &edge.relation,
                    edge.multiplicity,
                    edge.chunks,
                )
                .expect("rewired endpoints exist and differ");
            }
        }
    }
    out.debug_check();
    Ok(out)
}

/// Connected components as node-id sets, ordered by smallest member id.
pub fn connected_components(graph: &KnowledgeGraph) -> Vec<BTreeSet<NodeId>> {
    let mut seen = BTreeSet::new();
    let mut components = Vec::new();
    for start in graph.node_ids() {
        if !seen.insert(start) {
            continue;
        }
        let mut component = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for w in graph.neighbors(v) {
                if seen.insert(w) {
                    component.insert(w);
                    queue.push_back(w);
                }
            }
        }
        components.push(component);
    }
    components
}

/// Drops every component with fewer than `threshold` nodes.
pub fn prune_small_components(graph: &KnowledgeGraph, threshold: usize) -> KnowledgeGraph {
    let keep: BTreeSet<NodeId> = connected_components(graph)
        .into_iter()
        .filter(|c| c.len() >= threshold)
        .flatten()
        .collect();
    if keep.len() == graph.node_count() {
        return graph.clone();
    }
    graph.induced_subgraph(&keep)
}

/// Induced subgraph on the largest component (ties: smallest minimum id).
pub fn giant_component(graph: &KnowledgeGraph) -> Result<KnowledgeGraph, GraphError> {
    let components = connected_components(graph);
    let mut best: Option<&BTreeSet<NodeId>> = None;
    for c in &components {
        if best.is_none_or(|b| c.len() > b.len()) {
            best = Some(c);
        }
    }
    let best = best.ok_or(GraphError::Empty)?;
    Ok(graph.induced_subgraph(best))
}
