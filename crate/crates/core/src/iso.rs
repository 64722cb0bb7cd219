//! Structural isomorphism between candidate subgraphs of two graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjacency::DenseAdjacency;
use crate::graph::{connected_components, giant_component, KnowledgeGraph, NodeId};
use crate::stats::{betweenness_centrality, detect_communities, CommunityMethod};

pub const DEFAULT_MIN_NODES: usize = 15;
pub const DEFAULT_MIN_AVG_DEGREE: f64 = 2.0;
pub const DEFAULT_MAX_MAPPINGS: usize = 5;
pub const DEFAULT_PAIR_TIMEOUT: Duration = Duration::from_secs(5);
/// Highest-betweenness nodes whose ego networks become candidates.
pub const EGO_SEEDS: usize = 20;
pub const EGO_RADIUS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsoError {
    #[error("{0} graph has no nodes")]
    EmptyGraph(GraphTag),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("mapping does not preserve adjacency")]
    InvalidMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchScope {
    #[default]
    GiantComponentsOnly,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Labels are ignored.
    #[default]
    Structure,
    /// Mapped nodes must also carry equal labels.
    ExactLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoConstraints {
    pub min_nodes: usize,
    pub min_avg_degree: f64,
    pub scope: SearchScope,
    pub max_mappings: usize,
    pub pair_timeout: Duration,
    pub mode: MatchMode,
}

impl Default for IsoConstraints {
    fn default() -> Self {
        Self {
            min_nodes: DEFAULT_MIN_NODES,
            min_avg_degree: DEFAULT_MIN_AVG_DEGREE,
            scope: SearchScope::default(),
            max_mappings: DEFAULT_MAX_MAPPINGS,
            pair_timeout: DEFAULT_PAIR_TIMEOUT,
            mode: MatchMode::default(),
        }
    }
}

impl IsoConstraints {
    pub fn validate(&self) -> Result<(), IsoError> {
        if self.min_nodes < 2 {
            return Err(IsoError::InvalidConstraints("min_nodes must be at least 2".into()));
        }
        if !self.min_avg_degree.is_finite() || self.min_avg_degree < 0.0 {
            return Err(IsoError::InvalidConstraints("min_avg_degree must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphTag {
    First,
    Second,
}

impl std::fmt::Display for GraphTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphTag::First => "first",
            GraphTag::Second => "second",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "at")]
pub enum CandidateOrigin {
    Community(usize),
    Ego(NodeId),
    Component(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSubgraph {
    pub tag: GraphTag,
    pub origin: CandidateOrigin,
    pub nodes: BTreeSet<NodeId>,
    pub avg_degree: f64,
}

impl CandidateSubgraph {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePair {
    pub first: (NodeId, NodeId),
    pub first_relation: String,
    pub second: (NodeId, NodeId),
    pub second_relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoMapping {
    /// `(node of the first graph, node of the second graph)`, sorted.
    pub node_pairs: Vec<(NodeId, NodeId)>,
    pub edge_pairs: Vec<EdgePair>,
    /// Candidate indexes the mapping came from.
    pub candidates: (usize, usize),
}

impl IsoMapping {
    /// Builds a mapping from node pairs, attaching the induced edge pairs.
    pub fn from_pairs(
        first: &KnowledgeGraph,
        second: &KnowledgeGraph,
        pairs: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Self {
        let mut node_pairs: Vec<_> = pairs.into_iter().collect();
        node_pairs.sort();
        let mut edge_pairs = Vec::new();
        for (x, &(a, fa)) in node_pairs.iter().enumerate() {
            for &(b, fb) in &node_pairs[x + 1..] {
                if let (Some(e1), Some(e2)) = (first.edge(a, b), second.edge(fa, fb)) {
                    edge_pairs.push(EdgePair {
                        first: (a, b),
                        first_relation: e1.relation.clone(),
                        second: (fa, fb),
                        second_relation: e2.relation.clone(),
                    });
                }
            }
        }
        Self {
            node_pairs,
            edge_pairs,
            candidates: (0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.node_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_pairs.is_empty()
    }

    /// The mapping read from the second graph to the first.
    pub fn inverse(&self) -> Self {
        let mut node_pairs: Vec<_> = self.node_pairs.iter().map(|&(a, b)| (b, a)).collect();
        node_pairs.sort();
        Self {
            node_pairs,
            edge_pairs: self
                .edge_pairs
                .iter()
                .map(|e| EdgePair {
                    first: e.second,
                    first_relation: e.second_relation.clone(),
                    second: e.first,
                    second_relation: e.first_relation.clone(),
                })
                .collect(),
            candidates: (self.candidates.1, self.candidates.0),
        }
    }

    pub fn get(&self, node: NodeId) -> Option<NodeId> {
        self.node_pairs
            .binary_search_by_key(&node, |p| p.0)
            .ok()
            .map(|i| self.node_pairs[i].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub candidates: (usize, usize),
    pub size: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoSearch {
    pub first_candidates: Vec<CandidateSubgraph>,
    pub second_candidates: Vec<CandidateSubgraph>,
    pub mappings: Vec<IsoMapping>,
    pub skipped: Vec<SkippedPair>,
    /// Candidate pairs that passed the size and degree-sequence prefilter.
    pub pairs_tried: usize,
}

fn induced_avg_degree(graph: &KnowledgeGraph, nodes: &BTreeSet<NodeId>) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let twice_edges: usize = nodes
        .iter()
        .map(|&n| graph.neighbors(n).filter(|m| nodes.contains(m)).count())
        .sum();
    twice_edges as f64 / nodes.len() as f64
}

fn ball(graph: &KnowledgeGraph, center: NodeId, radius: usize) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([center]);
    let mut queue = VecDeque::from([(center, 0)]);
    while let Some((v, d)) = queue.pop_front() {
        if d == radius {
            continue;
        }
        for w in graph.neighbors(v) {
            if seen.insert(w) {
                queue.push_back((w, d + 1));
            }
        }
    }
    seen
}

fn enumerate_tagged(
    graph: &KnowledgeGraph,
    constraints: &IsoConstraints,
    tag: GraphTag,
) -> Vec<CandidateSubgraph> {
    let scoped = match constraints.scope {
        SearchScope::GiantComponentsOnly => match giant_component(graph) {
            Ok(g) => g,
            Err(_) => return Vec::new(),
        },
        SearchScope::Full => graph.clone(),
    };
    if scoped.node_count() < constraints.min_nodes {
        return Vec::new();
    }
    let mut raw: Vec<(CandidateOrigin, BTreeSet<NodeId>)> = Vec::new();
    if let Ok(partition) = detect_communities::<f64>(&scoped, CommunityMethod::GreedyModularity) {
        raw.extend(
            partition
                .communities
                .into_iter()
                .enumerate()
                .map(|(i, c)| (CandidateOrigin::Community(i), c)),
        );
    }
    let mut central: Vec<(NodeId, f64)> = betweenness_centrality::<f64>(&scoped).into_iter().collect();
    central.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    raw.extend(
        central
            .iter()
            .take(EGO_SEEDS)
            .map(|&(n, _)| (CandidateOrigin::Ego(n), ball(&scoped, n, EGO_RADIUS))),
    );
    raw.extend(
        connected_components(&scoped)
            .into_iter()
            .enumerate()
            .map(|(i, c)| (CandidateOrigin::Component(i), c)),
    );

    let mut seen: BTreeSet<BTreeSet<NodeId>> = BTreeSet::new();
    let mut out: Vec<CandidateSubgraph> = raw
        .into_iter()
        .filter(|(_, nodes)| nodes.len() >= constraints.min_nodes)
        .filter_map(|(origin, nodes)| {
            let avg_degree = induced_avg_degree(&scoped, &nodes);
            (avg_degree >= constraints.min_avg_degree && seen.insert(nodes.clone())).then_some(
                CandidateSubgraph {
                    tag,
                    origin,
                    nodes,
                    avg_degree,
                },
            )
        })
        .collect();
    out.sort_by_key(|c| std::cmp::Reverse(c.size()));
    out
}

/// Communities, ego networks of the most central nodes and connected
/// components that meet the size and average-degree thresholds.
pub fn enumerate_candidates(graph: &KnowledgeGraph, constraints: &IsoConstraints) -> Vec<CandidateSubgraph> {
    enumerate_tagged(graph, constraints, GraphTag::First)
}

fn sorted_degrees(adj: &DenseAdjacency) -> Vec<usize> {
    let mut d: Vec<usize> = (0..adj.len()).map(|i| adj.degree(i)).collect();
    d.sort_unstable();
    d
}

enum MatchOutcome {
    Found(Vec<usize>),
    NotIsomorphic,
    TimedOut,
}

struct Matcher<'a> {
    first: &'a DenseAdjacency,
    second: &'a DenseAdjacency,
    order: Vec<usize>,
    /// For each position in `order`, an earlier-matched neighbor if any.
    anchor: Vec<Option<usize>>,
    labels_equal: Option<&'a dyn Fn(usize, usize) -> bool>,
    forward: Vec<Option<usize>>,
    used: Vec<bool>,
    deadline: Instant,
    steps: u64,
    timed_out: bool,
}

impl<'a> Matcher<'a> {
    fn new(
        first: &'a DenseAdjacency,
        second: &'a DenseAdjacency,
        deadline: Instant,
        labels_equal: Option<&'a dyn Fn(usize, usize) -> bool>,
    ) -> Self {
        let n = first.len();
        // breadth-first from the highest-degree node so most placements are
        // constrained by an already matched neighbor
        let mut order = Vec::with_capacity(n);
        let mut anchor = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let start = (0..n)
                .filter(|&i| !placed[i])
                .max_by_key(|&i| (first.degree(i), std::cmp::Reverse(i)))
                .expect("unplaced node");
            placed[start] = true;
            order.push(start);
            anchor.push(None);
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                let mut next: Vec<usize> = first.neighbors[v].iter().copied().filter(|&w| !placed[w]).collect();
                next.sort_by_key(|&w| (std::cmp::Reverse(first.degree(w)), w));
                for w in next {
                    placed[w] = true;
                    order.push(w);
                    anchor.push(Some(v));
                    queue.push_back(w);
                }
            }
        }
        Self {
            first,
            second,
            order,
            anchor,
            labels_equal,
            forward: vec![None; n],
            used: vec![false; second.len()],
            deadline,
            steps: 0,
            timed_out: false,
        }
    }

    fn feasible(&self, u: usize, v: usize) -> bool {
        if self.first.degree(u) != self.second.degree(v) {
            return false;
        }
        if let Some(eq) = self.labels_equal {
            if !eq(u, v) {
                return false;
            }
        }
        // adjacency to every mapped node must agree in both directions
        self.order
            .iter()
            .filter_map(|&x| self.forward[x].map(|fx| (x, fx)))
            .all(|(x, fx)| self.first.has_edge(u, x) == self.second.has_edge(v, fx))
    }

    fn search(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        self.steps += 1;
        if self.steps.is_multiple_of(1024) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        if self.timed_out {
            return false;
        }
        let u = self.order[depth];
        let candidates: Vec<usize> = match self.anchor[depth] {
            Some(p) => self.second.neighbors[self.forward[p].expect("anchor mapped")].clone(),
            None => (0..self.second.len()).collect(),
        };
        for v in candidates {
            if self.used[v] || !self.feasible(u, v) {
                continue;
            }
            self.forward[u] = Some(v);
            self.used[v] = true;
            if self.search(depth + 1) {
                return true;
            }
            self.forward[u] = None;
            self.used[v] = false;
            if self.timed_out {
                return false;
            }
        }
        false
    }

    fn run(mut self) -> MatchOutcome {
        if self.search(0) {
            MatchOutcome::Found(self.forward.into_iter().map(|v| v.expect("complete")).collect())
        } else if self.timed_out {
            MatchOutcome::TimedOut
        } else {
            MatchOutcome::NotIsomorphic
        }
    }
}

/// Searches candidate pairs of equal size and degree sequence for an
/// induced isomorphism, largest candidates first, until `max_mappings`
/// distinct mappings are found.
pub fn find_isomorphic_subgraphs(
    first: &KnowledgeGraph,
    second: &KnowledgeGraph,
    constraints: &IsoConstraints,
) -> Result<IsoSearch, IsoError> {
    constraints.validate()?;
    if first.is_empty() {
        return Err(IsoError::EmptyGraph(GraphTag::First));
    }
    if second.is_empty() {
        return Err(IsoError::EmptyGraph(GraphTag::Second));
    }
    let first_candidates = enumerate_tagged(first, constraints, GraphTag::First);
    let second_candidates = enumerate_tagged(second, constraints, GraphTag::Second);
    let first_adj: Vec<DenseAdjacency> = first_candidates
        .iter()
        .map(|c| DenseAdjacency::from_graph(&first.induced_subgraph(&c.nodes)))
        .collect();
    let second_adj: Vec<DenseAdjacency> = second_candidates
        .iter()
        .map(|c| DenseAdjacency::from_graph(&second.induced_subgraph(&c.nodes)))
        .collect();
    let first_seq: Vec<Vec<usize>> = first_adj.iter().map(sorted_degrees).collect();
    let second_seq: Vec<Vec<usize>> = second_adj.iter().map(sorted_degrees).collect();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, c1) in first_candidates.iter().enumerate() {
        for (j, c2) in second_candidates.iter().enumerate() {
            if c1.size() == c2.size() && first_seq[i] == second_seq[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_by_key(|&(i, j)| (std::cmp::Reverse(first_candidates[i].size()), i, j));

    let mut mappings: Vec<IsoMapping> = Vec::new();
    let mut seen: BTreeSet<Vec<(NodeId, NodeId)>> = BTreeSet::new();
    let mut skipped = Vec::new();
    for &(i, j) in &pairs {
        if mappings.len() >= constraints.max_mappings {
            break;
        }
        let (a, b) = (&first_adj[i], &second_adj[j]);
        let label_check = |u: usize, v: usize| first.label(a.ids[u]) == second.label(b.ids[v]);
        let labels: Option<&dyn Fn(usize, usize) -> bool> = match constraints.mode {
            MatchMode::Structure => None,
            MatchMode::ExactLabels => Some(&label_check),
        };
        let deadline = Instant::now() + constraints.pair_timeout;
        match Matcher::new(a, b, deadline, labels).run() {
            MatchOutcome::Found(forward) => {
                let mut mapping = IsoMapping::from_pairs(
                    first,
                    second,
                    forward.iter().enumerate().map(|(u, &v)| (a.ids[u], b.ids[v])),
                );
                mapping.candidates = (i, j);
                if !verify_mapping(first, second, &mapping) {
                    skipped.push(SkippedPair {
                        candidates: (i, j),
                        size: a.len(),
                        reason: "mapping failed verification".into(),
                    });
                } else if seen.insert(mapping.node_pairs.clone()) {
                    mappings.push(mapping);
                }
            }
            MatchOutcome::NotIsomorphic => {}
            MatchOutcome::TimedOut => skipped.push(SkippedPair {
                candidates: (i, j),
                size: a.len(),
                reason: format!("timed out after {:?}", constraints.pair_timeout),
            }),
        }
    }
    Ok(IsoSearch {
        first_candidates,
        second_candidates,
        mappings,
        skipped,
        pairs_tried: pairs.len(),
    })
}

/// True iff the mapping is a bijection between existing nodes that
/// preserves both edges and non-edges.
pub fn verify_mapping(first: &KnowledgeGraph, second: &KnowledgeGraph, mapping: &IsoMapping) -> bool {
    let mut forward: HashMap<NodeId, NodeId> = HashMap::new();
    let mut range: BTreeSet<NodeId> = BTreeSet::new();
    for &(a, b) in &mapping.node_pairs {
        if !first.contains(a) || !second.contains(b) {
            return false;
        }
        if forward.insert(a, b).is_some() || !range.insert(b) {
            return false;
        }
    }
    let pairs = &mapping.node_pairs;
    pairs.iter().enumerate().all(|(x, &(a, fa))| {
        pairs[x + 1..]
            .iter()
            .all(|&(b, fb)| first.has_edge(a, b) == second.has_edge(fa, fb))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRow {
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub first: String,
    pub second: String,
    /// Left empty for downstream completion.
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingReport {
    pub nodes: Vec<NodeRow>,
    pub edges: Vec<EdgeRow>,
}

fn edge_cell(graph: &KnowledgeGraph, (a, b): (NodeId, NodeId), relation: &str) -> String {
    let label = |n| graph.label(n).unwrap_or_default();
    format!("('{}', '{}') ('{}')", label(a), label(b), relation)
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn latex_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            _ => out.push(c),
        }
    }
    out
}

impl MappingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,g1,g2,reasoning\n");
        for r in &self.nodes {
            let _ = writeln!(out, "node,{},{},", csv_field(&r.first), csv_field(&r.second));
        }
        for r in &self.edges {
            let _ = writeln!(
                out,
                "edge,{},{},{}",
                csv_field(&r.first),
                csv_field(&r.second),
                csv_field(&r.reasoning)
            );
        }
        out
    }

    pub fn to_latex(&self) -> String {
        let mut out = String::from(
            "\\begin{tabular}{|p{4cm}|p{4cm}|p{8cm}|}\n\\hline\n\\textbf{G1 Edge (Label)} & \\textbf{G2 Edge (Label)} & \\textbf{Reasoning} \\\\\n\\hline\n",
        );
        for r in &self.edges {
            let _ = writeln!(
                out,
                "{} & {} & {} \\\\\n\\hline",
                latex_escape(&r.first),
                latex_escape(&r.second),
                latex_escape(&r.reasoning)
            );
        }
        out.push_str("\\end{tabular}\n");
        out
    }
}

/// Node and edge correspondence tables for a verified mapping.
pub fn mapping_report(
    first: &KnowledgeGraph,
    second: &KnowledgeGraph,
    mapping: &IsoMapping,
) -> Result<MappingReport, IsoError> {
    if !verify_mapping(first, second, mapping) {
        return Err(IsoError::InvalidMapping);
    }
    let nodes = mapping
        .node_pairs
        .iter()
        .map(|&(a, b)| NodeRow {
            first: first.label(a).unwrap_or_default().to_string(),
            second: second.label(b).unwrap_or_default().to_string(),
        })
        .collect();
    let rebuilt = IsoMapping::from_pairs(first, second, mapping.node_pairs.iter().copied());
    let edges = rebuilt
        .edge_pairs
        .iter()
        .map(|e| EdgeRow {
            first: edge_cell(first, e.first, &e.first_relation),
            second: edge_cell(second, e.second, &e.second_relation),
            reasoning: String::new(),
        })
        .collect();
    Ok(MappingReport { nodes, edges })
}

/// Sorted degree multiset of the mapped nodes in one graph.
pub fn induced_degree_sequence(graph: &KnowledgeGraph, nodes: &BTreeSet<NodeId>) -> Vec<usize> {
    let mut d: Vec<usize> = nodes
        .iter()
        .map(|&n| graph.neighbors(n).filter(|m| nodes.contains(m)).count())
        .collect();
    d.sort_unstable();
    d
}

/// Groups candidates by size, for reporting.
pub fn candidate_size_histogram(candidates: &[CandidateSubgraph]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for c in candidates {
        *h.entry(c.size()).or_insert(0) += 1;
    }
    h
}
