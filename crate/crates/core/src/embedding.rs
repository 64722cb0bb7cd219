//! Embedding vectors, provider contract, node index and similarity merging.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{KnowledgeGraph, MergeGroup, NodeId};
use crate::scalar::Scalar;

/// Default cosine threshold above which node labels merge.
pub const DEFAULT_MERGE_ETA: f64 = 0.95;
/// Default token budget of an embedding request.
pub const DEFAULT_MAX_INPUT_TOKENS: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite component at position {0}")]
    NonFinite(usize),
    #[error("provider failed for {} label(s): {message}", failed.len())]
    Provider { failed: Vec<String>, message: String },
}

/// Unit-length embedding. Normalization happens on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EmbeddingError> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(pos));
        }
        let norm = l2_norm(&values);
        if norm == T::zero() {
            return Err(EmbeddingError::ZeroVector);
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn from_f64(values: &[f64]) -> Result<Self, EmbeddingError> {
        Self::new(values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity with another unit vector (their dot product).
    pub fn cosine(&self, other: &Self) -> Result<T, EmbeddingError> {
        if self.dimension() != other.dimension() {
            return Err(EmbeddingError::DimensionMismatch(
                self.dimension(),
                other.dimension(),
            ));
        }
        Ok(clamp_unit(dot(&self.values, &other.values)))
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn l2_norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

/// `(a . b) / (|a| |b|)` on raw, unnormalized vectors.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(clamp_unit(dot(a, b) / (na * nb)))
}

/// Keeps the first `max_tokens` whitespace-separated words of `text`.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> Cow<'_, str> {
    let mut words = text.split_whitespace();
    let kept: Vec<&str> = words.by_ref().take(max_tokens).collect();
    if words.next().is_none() {
        Cow::Borrowed(text)
    } else {
        Cow::Owned(kept.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Anything that turns text into fixed-dimension vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn max_input_tokens(&self) -> usize {
        DEFAULT_MAX_INPUT_TOKENS
    }

    /// Identifies the provider and model behind an index.
    fn fingerprint(&self) -> String;

    /// Embeds each text; must return one vector per input, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Deterministic offline provider.
///
/// Each text is canonicalized (lowercase, punctuation and underscores as
/// spaces), hashed together with the seed, and expanded into Gaussian
/// coordinates. Identical canonical text gives identical vectors; distinct
/// text gives nearly orthogonal ones.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
    max_tokens: usize,
    overrides: HashMap<String, Vec<f64>>,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            max_tokens: DEFAULT_MAX_INPUT_TOKENS,
            overrides: HashMap::new(),
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// Pins the raw vector returned for `text`.
    pub fn with_vector(mut self, text: &str, vector: Vec<f64>) -> Self {
        assert_eq!(vector.len(), self.dimension, "override dimension");
        self.overrides.insert(Self::canonical(text), vector);
        self
    }

    fn canonical(text: &str) -> String {
        let mapped: String = text
            .chars()
            .map(|c| {
                if c.is_alphanumeric() {
                    c.to_ascii_lowercase()
                } else {
                    ' '
                }
            })
            .collect();
        mapped.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let key = Self::canonical(text);
        if let Some(v) = self.overrides.get(&key) {
            return v.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(key.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        (0..self.dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_input_tokens(&self) -> usize {
        self.max_tokens
    }

    fn fingerprint(&self) -> String {
        format!("hash-mock:d{}:s{}", self.dimension, self.seed)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry<T> {
    pub label: String,
    pub vector: EmbeddingVector<T>,
}

/// One unit vector per node of the graph it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbeddingIndex<T> {
    entries: BTreeMap<NodeId, IndexEntry<T>>,
    dimension: usize,
    fingerprint: String,
}

impl<T: Scalar> NodeEmbeddingIndex<T> {
    /// Builds an index from explicit vectors; all must share one dimension.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (NodeId, String, EmbeddingVector<T>)>,
        fingerprint: impl Into<String>,
    ) -> Result<Self, EmbeddingError> {
        let mut map = BTreeMap::new();
        let mut dimension = None;
        for (id, label, vector) in entries {
            let d = *dimension.get_or_insert(vector.dimension());
            if d != vector.dimension() {
                return Err(EmbeddingError::DimensionMismatch(d, vector.dimension()));
            }
            map.insert(id, IndexEntry { label, vector });
        }
        Ok(Self {
            entries: map,
            dimension: dimension.unwrap_or(0),
            fingerprint: fingerprint.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn get(&self, id: NodeId) -> Option<&IndexEntry<T>> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &IndexEntry<T>)> {
        self.entries.iter().map(|(id, e)| (*id, e))
    }

    /// True when the index holds exactly the nodes of `graph`.
    pub fn covers(&self, graph: &KnowledgeGraph) -> bool {
        self.entries.len() == graph.node_count() && graph.node_ids().all(|id| self.entries.contains_key(&id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// Maximum number of concurrent provider calls.
    pub parallelism: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            parallelism: 4,
        }
    }
}

/// Embeds every node label of `graph`. Any failed batch rejects the whole
/// index and reports the labels it covered.
pub fn embed_nodes<T: Scalar>(
    graph: &KnowledgeGraph,
    provider: &dyn EmbeddingProvider,
    options: EmbedOptions,
) -> Result<NodeEmbeddingIndex<T>, EmbeddingError> {
    let max_tokens = provider.max_input_tokens();
    let nodes: Vec<(NodeId, String)> = graph.nodes().map(|n| (n.id, n.label.clone())).collect();
    let batches: Vec<&[(NodeId, String)]> = nodes.chunks(options.batch_size.max(1)).collect();
    let results: Mutex<Vec<Option<Result<Vec<Vec<f64>>, ProviderError>>>> =
        Mutex::new(vec![None; batches.len()]);
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..options.parallelism.clamp(1, batches.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(batch) = batches.get(i) else { break };
                let texts: Vec<String> = batch
                    .iter()
                    .map(|(_, label)| truncate_to_tokens(label, max_tokens).into_owned())
                    .collect();
                let out = provider.embed_batch(&texts).and_then(|vs| {
                    if vs.len() == texts.len() {
                        Ok(vs)
                    } else {
                        Err(ProviderError(format!(
                            "expected {} vectors, got {}",
                            texts.len(),
                            vs.len()
                        )))
                    }
                });
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });

    let mut entries = Vec::with_capacity(nodes.len());
    let mut failed = Vec::new();
    let mut message = String::new();
    for (batch, result) in batches.iter().zip(results.into_inner().expect("results lock")) {
        match result.expect("every batch visited") {
            Ok(vectors) => {
                for ((id, label), raw) in batch.iter().zip(vectors) {
                    match EmbeddingVector::from_f64(&raw) {
                        Ok(v) => entries.push((*id, label.clone(), v)),
                        Err(e) => {
                            failed.push(label.clone());
                            message = e.to_string();
                        }
                    }
                }
            }
            Err(e) => {
                failed.extend(batch.iter().map(|(_, l)| l.clone()));
                message = e.0;
            }
        }
    }
    if !failed.is_empty() {
        return Err(EmbeddingError::Provider { failed, message });
    }
    let index = NodeEmbeddingIndex::from_entries(entries, provider.fingerprint())?;
    if index.dimension() != provider.dimension() && !index.is_empty() {
        return Err(EmbeddingError::DimensionMismatch(
            index.dimension(),
            provider.dimension(),
        ));
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch<T> {
    pub node: NodeId,
    pub label: String,
    pub score: T,
}

/// Ranks every indexed node against `query` and returns the best `k`.
/// Ties are broken by label, ascending.
pub fn match_vector<T: Scalar>(
    index: &NodeEmbeddingIndex<T>,
    query: &EmbeddingVector<T>,
    k: usize,
) -> Result<Vec<NodeMatch<T>>, EmbeddingError> {
    let mut scored = index
        .iter()
        .map(|(id, entry)| {
            Ok(NodeMatch {
                node: id,
                label: entry.label.clone(),
                score: entry.vector.cosine(query)?,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then_with(|| a.label.cmp(&b.label))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Embeds `query` with `provider` (truncated to its token budget) and ranks nodes.
pub fn match_nodes<T: Scalar>(
    index: &NodeEmbeddingIndex<T>,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<NodeMatch<T>>, EmbeddingError> {
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let text = truncate_to_tokens(query, provider.max_input_tokens()).into_owned();
    let raw = provider
        .embed_batch(std::slice::from_ref(&text))
        .map_err(|e| EmbeddingError::Provider {
            failed: vec![text.clone()],
            message: e.0,
        })?;
    let raw = raw.into_iter().next().ok_or_else(|| EmbeddingError::Provider {
        failed: vec![text],
        message: "provider returned no vector".into(),
    })?;
    match_vector(index, &EmbeddingVector::from_f64(&raw)?, k)
}

fn find_root(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Groups nodes whose pairwise similarity exceeds `eta`, closed transitively.
/// Only groups with two or more members are returned, ordered by smallest id.
pub fn similarity_merge_groups<T: Scalar>(
    index: &NodeEmbeddingIndex<T>,
    graph: &KnowledgeGraph,
    eta: T,
) -> Vec<MergeGroup> {
    let entries: Vec<(NodeId, &[T])> = index
        .iter()
        .filter(|(id, _)| graph.contains(*id))
        .map(|(id, e)| (id, e.vector.as_slice()))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..entries.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let entries = &entries;
            ((i + 1)..entries.len())
                .filter(move |&j| dot(entries[i].1, entries[j].1) > eta)
                .map(move |j| (i, j))
        })
        .collect();

    let mut parent: Vec<usize> = (0..entries.len()).collect();
    for (i, j) in pairs {
        let (ri, rj) = (find_root(&mut parent, i), find_root(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for i in 0..entries.len() {
        let root = find_root(&mut parent, i);
        groups.entry(root).or_default().push(entries[i].0);
    }
    groups
        .into_values()
        .filter(|members| members.len() > 1)
        .map(|members| MergeGroup::new(members, graph).expect("members exist in graph"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_from_triples, Triple};

    fn unit(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::from_f64(values).unwrap()
    }

    #[test]
    fn cosine_basics() {
        let v = [0.3f64, -1.2, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&[1.0, 2.0], &[1.0]),
            Err(EmbeddingError::DimensionMismatch(2, 1))
        );
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroVector)
        );
        assert_eq!(
            EmbeddingVector::<f64>::new(vec![1.0, f64::NAN]),
            Err(EmbeddingError::NonFinite(1))
        );
    }

    #[test]
    fn vectors_are_unit_length() {
        let v = unit(&[3.0, 4.0]);
        assert!((l2_norm(v.as_slice()) - 1.0).abs() < 1e-12);
        let f: EmbeddingVector<f32> = EmbeddingVector::from_f64(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((l2_norm(f.as_slice()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn truncation_keeps_leading_words() {
        assert_eq!(truncate_to_tokens("a b c d", 2), "a b");
        assert!(matches!(truncate_to_tokens("a b", 2), Cow::Borrowed(_)));
    }

    #[test]
    fn hash_embedder_canonicalizes_and_is_deterministic() {
        let p = HashEmbedder::new(64, 7);
        assert_eq!(p.embed_one("Mechanical_Properties"), p.embed_one("mechanical properties"));
        assert_ne!(p.embed_one("silk"), p.embed_one("nacre"));
        assert_ne!(
            p.embed_one("silk"),
            HashEmbedder::new(64, 8).embed_one("silk")
        );
    }

    fn small_graph() -> KnowledgeGraph {
        build_from_triples(&[
            Triple::new("silk", "is", "fiber"),
            Triple::new("fiber", "has", "strength"),
        ])
        .graph
    }

    #[test]
    fn embed_nodes_covers_graph() {
        let g = small_graph();
        let index: NodeEmbeddingIndex<f32> =
            embed_nodes(&g, &HashEmbedder::new(32, 1), EmbedOptions { batch_size: 2, parallelism: 3 }).unwrap();
        assert_eq!(index.len(), 3);
        assert!(index.covers(&g));
        assert_eq!(index.dimension(), 32);
    }

    struct FailingProvider;

    impl EmbeddingProvider for FailingProvider {
        fn dimension(&self) -> usize {
            4
        }
        fn fingerprint(&self) -> String {
            "failing".into()
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            if texts.iter().any(|t| t == "fiber") {
                Err(ProviderError("boom".into()))
            } else {
                Ok(texts.iter().map(|_| vec![1.0, 0.0, 0.0, 0.0]).collect())
            }
        }
    }

    #[test]
    fn provider_failure_names_labels() {
        let err = embed_nodes::<f64>(&small_graph(), &FailingProvider, EmbedOptions { batch_size: 1, parallelism: 2 })
            .unwrap_err();
        assert_eq!(
            err,
            EmbeddingError::Provider {
                failed: vec!["fiber".into()],
                message: "boom".into()
            }
        );
    }

    #[test]
    fn exact_query_ranks_first() {
        let g = small_graph();
        let p = HashEmbedder::new(64, 3);
        let index: NodeEmbeddingIndex<f64> = embed_nodes(&g, &p, EmbedOptions::default()).unwrap();
        let m = match_nodes(&index, "Fiber", 2, &p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].label, "fiber");
        assert!((m[0].score - 1.0).abs() < 1e-12);
        assert!(match_nodes(&NodeEmbeddingIndex::<f64>::from_entries([], "x").unwrap(), "q", 3, &p)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ties_break_by_label() {
        let v = unit(&[1.0, 0.0]);
        let index = NodeEmbeddingIndex::from_entries(
            [
                (NodeId(0), "b".to_string(), v.clone()),
                (NodeId(1), "a".to_string(), v.clone()),
            ],
            "t",
        )
        .unwrap();
        let m = match_vector(&index, &v, 2).unwrap();
        assert_eq!(m[0].label, "a");
    }

    #[test]
    fn chains_close_transitively() {
        // a~b 0.97, b~c 0.96, a~c 0.80 in a plane: angles chosen to give these cosines.
        let (ab, bc): (f64, f64) = (0.97f64.acos(), 0.96f64.acos());
        let a = unit(&[1.0, 0.0]);
        let b = unit(&[ab.cos(), ab.sin()]);
        let c = unit(&[(ab + bc).cos(), (ab + bc).sin()]);
        assert!(a.cosine(&c).unwrap() < 0.95);
        let g = build_from_triples(&[Triple::new("a", "r", "b"), Triple::new("b", "r", "c"), Triple::new("c", "r", "d")]).graph;
        let d = unit(&[-1.0, 0.0]);
        let index = NodeEmbeddingIndex::from_entries(
            g.nodes()
                .map(|n| (n.id, n.label.clone(), [&a, &b, &c, &d][n.id.0 as usize].clone())),
            "t",
        )
        .unwrap();
        let groups = similarity_merge_groups(&index, &g, 0.95);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members.len(), 3);
        assert_eq!(g.label(groups[0].canonical), Some("b"));
    }

    #[test]
    fn duplicate_vectors_merge() {
        let g = build_from_triples(&[Triple::new("mechanical properties", "r", "mechanical_properties")]).graph;
        let p = HashEmbedder::new(64, 0);
        let index: NodeEmbeddingIndex<f64> = embed_nodes(&g, &p, EmbedOptions::default()).unwrap();
        let groups = similarity_merge_groups(&index, &g, 0.95);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members.len(), 2);
        assert_eq!(g.label(groups[0].canonical), Some("mechanical properties"));
    }
}
