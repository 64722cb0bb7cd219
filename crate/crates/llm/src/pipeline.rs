//! Text-to-graph pipeline: chunking, distillation, triple extraction,
//! corpus assembly and augmentation of an existing graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use kgraph_core::embedding::{embed_nodes, similarity_merge_groups, EmbedOptions, EmbeddingError, EmbeddingProvider};
use kgraph_core::graph::{
    build_from_triples, compose, giant_component, merge_nodes, prune_small_components, GraphError, KnowledgeGraph,
    MergeGroup, Triple,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatClient, ChatRequest};
use crate::prompts;

pub const DEFAULT_TARGET_WORDS: usize = 800;
pub const MIN_TARGET_WORDS: usize = 50;
pub const DEFAULT_PRUNE_THRESHOLD: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("distillation of {chunk} failed at the {stage} stage: {message}")]
    Distill { chunk: String, stage: &'static str, message: String },
    #[error("no chunk produced any triples")]
    NoSuccessfulChunks,
    #[error("artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub id: String,
    pub text: String,
    pub word_count: usize,
}

/// Filename-safe chunk id: `{doc}-{index:04}`.
pub fn chunk_id(doc_id: &str, index: usize) -> String {
    let doc: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{doc}-{index:04}")
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

/// Splits on paragraph boundaries, closing a chunk once it reaches
/// `target_words`. Paragraphs longer than the target are cut at word
/// boundaries.
pub fn chunk_document(doc_id: &str, text: &str, target_words: usize) -> Result<Vec<DocumentChunk>, PipelineError> {
    if target_words < MIN_TARGET_WORDS {
        return Err(PipelineError::InvalidArgument(format!(
            "target_words must be at least {MIN_TARGET_WORDS}, got {target_words}"
        )));
    }
    let mut pieces: Vec<(String, usize)> = Vec::new();
    for para in paragraphs(text) {
        let words: Vec<&str> = para.split_whitespace().collect();
        if words.len() <= target_words {
            let n = words.len();
            pieces.push((para.clone(), n));
        } else {
            for part in words.chunks(target_words) {
                pieces.push((part.join(" "), part.len()));
            }
        }
    }
    let mut chunks = Vec::new();
    let mut buf: Vec<String> = Vec::new();
    let mut count = 0;
    let mut flush = |buf: &mut Vec<String>, count: &mut usize| {
        if *count > 0 {
            chunks.push(DocumentChunk {
                id: chunk_id(doc_id, chunks.len()),
                text: buf.join("\n\n"),
                word_count: *count,
            });
        }
        buf.clear();
        *count = 0;
    };
    for (para, words) in pieces {
        if count > 0 && count + words > target_words && count >= target_words / 2 {
            flush(&mut buf, &mut count);
        }
        buf.push(para);
        count += words;
        if count >= target_words {
            flush(&mut buf, &mut count);
        }
    }
    flush(&mut buf, &mut count);
    Ok(chunks)
}

/// Removes HTML/XML tags and Markdown heading and emphasis markers.
pub fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            _ if in_tag => {}
            _ => out.push(c),
        }
    }
    out.lines()
        .map(|l| l.trim_start_matches('#').trim_start().replace("**", "").replace("__", ""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawContext {
    pub title: String,
    pub summary: String,
    pub bullets: Vec<String>,
}

impl RawContext {
    /// Summary followed by the bullet list; the extraction input.
    pub fn context_text(&self) -> String {
        let mut out = self.summary.clone();
        for b in &self.bullets {
            out.push_str("\n- ");
            out.push_str(b);
        }
        out
    }
}

fn bullet_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            let t = l.trim();
            let t = t.trim_start_matches(['-', '*', '•']).trim_start();
            let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
            if digits > 0 && t[digits..].starts_with(['.', ')']) {
                t[digits + 1..].trim_start().to_string()
            } else {
                t.to_string()
            }
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Summary, bullet list and title of a chunk, in that order.
pub fn distill_chunk(chunk: &DocumentChunk, llm: &dyn ChatClient) -> Result<RawContext, PipelineError> {
    let call = |stage: &'static str, system: &str, user: String| {
        let text = llm
            .complete(&ChatRequest::prompt(Some(system), user))
            .map_err(|e| PipelineError::Distill { chunk: chunk.id.clone(), stage, message: e.to_string() })?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(PipelineError::Distill {
                chunk: chunk.id.clone(),
                stage,
                message: "empty completion".into(),
            });
        }
        Ok(text)
    };
    let summary = call("summary", prompts::DISTILL_SYSTEM, prompts::summary_prompt(&chunk.text))?;
    let bullets_text = call("bullets", prompts::DISTILL_SYSTEM, prompts::bullets_prompt(&summary))?;
    let title = call("title", prompts::TITLE_SYSTEM, prompts::title_prompt(&summary))?;
    let bullets = bullet_lines(&bullets_text);
    if bullets.is_empty() {
        return Err(PipelineError::Distill {
            chunk: chunk.id.clone(),
            stage: "bullets",
            message: "no bullet lines".into(),
        });
    }
    Ok(RawContext { title, summary, bullets })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionStatus {
    Ok,
    FailedFirstPass,
    FailedBothPasses,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub chunk_id: String,
    pub triples: Vec<Triple>,
    pub status: ExtractionStatus,
    /// Every model output, in call order, across attempts.
    pub raw_outputs: Vec<String>,
    /// Elements of the parsed array that were not valid triples.
    pub dropped: usize,
    pub error: Option<String>,
}

/// Rewrites Python-style single-quoted strings as JSON strings. A single
/// quote closes a string only when followed by `,`, `:`, `}` or `]`.
pub fn normalize_quotes(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            // copy a double-quoted string verbatim
            out.push(c);
            i += 1;
            while i < chars.len() {
                out.push(chars[i]);
                if chars[i] == '\\' && i + 1 < chars.len() {
                    out.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                i += 1;
                if chars[i - 1] == '"' {
                    break;
                }
            }
        } else if c == '\'' {
            out.push('"');
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                if d == '\'' {
                    let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                    if matches!(next, None | Some(',' | ':' | '}' | ']')) {
                        break;
                    }
                }
                match d {
                    '"' => out.push_str("\\\""),
                    '\\' if chars.get(i + 1) == Some(&'\'') => {
                        out.push('\'');
                        i += 1;
                    }
                    _ => out.push(d),
                }
                i += 1;
            }
            out.push('"');
            i += 1;
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn first_object_array(text: &str) -> Option<Vec<serde_json::Value>> {
    let starts: Vec<usize> = text.match_indices('[').map(|(i, _)| i).collect();
    let ends: Vec<usize> = text.match_indices(']').map(|(i, _)| i).collect();
    for &s in &starts {
        for &e in ends.iter().filter(|&&e| e > s) {
            let slice = &text[s..=e];
            let parsed = serde_json::from_str::<Vec<serde_json::Value>>(slice)
                .or_else(|_| serde_json::from_str::<Vec<serde_json::Value>>(&normalize_quotes(slice)));
            if let Ok(items) = parsed {
                if !items.is_empty() && items.iter().all(|v| v.is_object()) {
                    return Some(items);
                }
            }
        }
    }
    None
}

/// Parses the first well-formed JSON array of objects in `text`, keeping
/// elements with non-empty string `node_1`, `node_2` and `edge` that form a
/// valid triple. Returns the triples and the number of dropped elements.
pub fn parse_triples(text: &str, chunk_id: &str) -> Option<(Vec<Triple>, usize)> {
    let items = first_object_array(text)?;
    let mut triples = Vec::new();
    let mut dropped = 0;
    for item in &items {
        let field = |k: &str| item.get(k).and_then(|v| v.as_str()).map(str::trim).filter(|s| !s.is_empty());
        match (field("node_1"), field("edge"), field("node_2")) {
            (Some(a), Some(r), Some(b)) => {
                let t = Triple::new(a, r, b).with_source(chunk_id);
                if t.validate().is_ok() {
                    triples.push(t);
                } else {
                    dropped += 1;
                }
            }
            _ => dropped += 1,
        }
    }
    Some((triples, dropped))
}

/// Serializes triples in the extraction schema.
pub fn triples_to_json(triples: &[Triple]) -> String {
    let items: Vec<serde_json::Value> = triples
        .iter()
        .map(|t| serde_json::json!({ "node_1": t.subject, "node_2": t.object, "edge": t.relation }))
        .collect();
    serde_json::to_string_pretty(&items).expect("json values serialize")
}

/// Ontology pass, refinement pass and format pass; only the last output is
/// parsed.
pub fn extract_triples(chunk_id: &str, context: &RawContext, llm: &dyn ChatClient) -> ExtractionResult {
    let mut result = ExtractionResult {
        chunk_id: chunk_id.to_string(),
        triples: Vec::new(),
        status: ExtractionStatus::FailedFirstPass,
        raw_outputs: Vec::new(),
        dropped: 0,
        error: None,
    };
    let ctx = context.context_text();
    let first = ChatRequest::prompt(Some(prompts::ONTOLOGY_SYSTEM), prompts::ontology_prompt(&ctx));
    let outcome = llm.complete(&first).and_then(|initial| {
        result.raw_outputs.push(initial.clone());
        let refined = llm.complete(&ChatRequest::prompt(
            Some(prompts::ONTOLOGY_SYSTEM),
            prompts::refine_prompt(&ctx, &initial),
        ))?;
        result.raw_outputs.push(refined.clone());
        let formatted = llm.complete(&ChatRequest::prompt(Some(prompts::FORMAT_SYSTEM), prompts::format_prompt(&refined)))?;
        result.raw_outputs.push(formatted.clone());
        Ok(formatted)
    });
    match outcome {
        Err(e) => result.error = Some(e.to_string()),
        Ok(text) => match parse_triples(&text, chunk_id) {
            Some((triples, dropped)) if !triples.is_empty() => {
                result.triples = triples;
                result.dropped = dropped;
                result.status = ExtractionStatus::Ok;
            }
            Some((_, dropped)) => {
                result.dropped = dropped;
                result.error = Some("no valid triples in output".into());
            }
            None => result.error = Some("no JSON array of objects in output".into()),
        },
    }
    result
}

/// Re-runs extraction once for every chunk that failed its first pass.
pub fn retry_failed(
    results: Vec<ExtractionResult>,
    contexts: &BTreeMap<String, RawContext>,
    llm: &dyn ChatClient,
) -> Vec<ExtractionResult> {
    results
        .into_iter()
        .map(|r| {
            if r.status != ExtractionStatus::FailedFirstPass {
                return r;
            }
            let Some(ctx) = contexts.get(&r.chunk_id) else {
                return ExtractionResult {
                    status: ExtractionStatus::FailedBothPasses,
                    error: Some("no raw context to retry with".into()),
                    ..r
                };
            };
            let mut again = extract_triples(&r.chunk_id, ctx, llm);
            let mut outputs = r.raw_outputs;
            outputs.append(&mut again.raw_outputs);
            again.raw_outputs = outputs;
            if again.status != ExtractionStatus::Ok {
                again.status = ExtractionStatus::FailedBothPasses;
            }
            again
        })
        .collect()
}

/// Composes the per-chunk graphs of all successful results, in chunk-id
/// order.
pub fn build_corpus_graph(results: &[ExtractionResult]) -> Result<KnowledgeGraph, PipelineError> {
    let mut ok: Vec<&ExtractionResult> = results.iter().filter(|r| r.status == ExtractionStatus::Ok).collect();
    if ok.is_empty() {
        return Err(PipelineError::NoSuccessfulChunks);
    }
    ok.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    let mut graph: Option<KnowledgeGraph> = None;
    for r in ok {
        let local = build_from_triples(&r.triples).graph;
        graph = Some(match graph {
            None => local,
            Some(g) => compose(&g, &local),
        });
    }
    Ok(graph.expect("at least one result"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    pub eta: f64,
    /// Components smaller than this are removed; `None` keeps all.
    pub prune_threshold: Option<usize>,
    pub giant_only: bool,
    pub embed: EmbedOptions,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            eta: kgraph_core::embedding::DEFAULT_MERGE_ETA,
            prune_threshold: Some(DEFAULT_PRUNE_THRESHOLD),
            giant_only: true,
            embed: EmbedOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub graph: KnowledgeGraph,
    pub merged: Vec<MergeGroup>,
    pub composed_nodes: usize,
    pub composed_edges: usize,
}

/// Compose, merge near-duplicate labels, then optionally prune small
/// components and keep only the giant component.
pub fn augment_graph(
    global: &KnowledgeGraph,
    addition: &KnowledgeGraph,
    provider: &dyn EmbeddingProvider,
    options: AugmentOptions,
) -> Result<AugmentOutcome, PipelineError> {
    let composed = compose(global, addition);
    let (composed_nodes, composed_edges) = (composed.node_count(), composed.edge_count());
    let merged_graph;
    let mut merged = Vec::new();
    if composed.is_empty() {
        merged_graph = composed;
    } else {
        let index = embed_nodes::<f32>(&composed, provider, options.embed)?;
        merged = similarity_merge_groups(&index, &composed, options.eta as f32);
        merged_graph = merge_nodes(&composed, &merged)?;
    }
    let mut graph = match options.prune_threshold {
        Some(t) => prune_small_components(&merged_graph, t),
        None => merged_graph,
    };
    if options.giant_only && !graph.is_empty() {
        graph = giant_component(&graph)?;
    }
    Ok(AugmentOutcome { graph, merged, composed_nodes, composed_edges })
}

/// Per-chunk JSON artifacts under a run directory.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub const CHUNKS: &'static str = "chunks";
    pub const CONTEXTS: &'static str = "contexts";
    pub const EXTRACTIONS: &'static str = "extractions";

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let root = root.into();
        for dir in [Self::CHUNKS, Self::CONTEXTS, Self::EXTRACTIONS] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(|e| artifact_error(&p, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: &str, id: &str) -> PathBuf {
        self.root.join(kind).join(format!("{id}.json"))
    }

    fn save<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.path(kind, id);
        let text = serde_json::to_string_pretty(value).expect("artifacts serialize");
        fs::write(&path, text).map_err(|e| artifact_error(&path, e))
    }

    fn load<T: for<'de> Deserialize<'de>>(&self, kind: &str, id: &str) -> Result<Option<T>, PipelineError> {
        let path = self.path(kind, id);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| artifact_error(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| artifact_error(&path, e))
    }

    pub fn save_chunk(&self, chunk: &DocumentChunk) -> Result<(), PipelineError> {
        self.save(Self::CHUNKS, &chunk.id, chunk)
    }

    pub fn save_context(&self, id: &str, ctx: &RawContext) -> Result<(), PipelineError> {
        self.save(Self::CONTEXTS, id, ctx)
    }

    pub fn load_context(&self, id: &str) -> Result<Option<RawContext>, PipelineError> {
        self.load(Self::CONTEXTS, id)
    }

    pub fn save_extraction(&self, result: &ExtractionResult) -> Result<(), PipelineError> {
        self.save(Self::EXTRACTIONS, &result.chunk_id, result)
    }

    pub fn load_extraction(&self, id: &str) -> Result<Option<ExtractionResult>, PipelineError> {
        self.load(Self::EXTRACTIONS, id)
    }
}

fn artifact_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Artifact { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusOptions {
    pub target_words: usize,
    /// Concurrent chunks; 1 processes chunks sequentially in id order.
    pub parallelism: usize,
    pub retry: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { target_words: DEFAULT_TARGET_WORDS, parallelism: 1, retry: true }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusOutcome {
    pub chunks: Vec<DocumentChunk>,
    pub contexts: BTreeMap<String, RawContext>,
    pub results: Vec<ExtractionResult>,
    pub distill_failures: Vec<PipelineError>,
    /// Chunks whose successful extraction was loaded from the store.
    pub resumed: BTreeSet<String>,
    pub graph: KnowledgeGraph,
}

enum ChunkWork {
    Done(Option<RawContext>, ExtractionResult, bool),
    DistillFailed(PipelineError),
}

fn process_chunk(
    chunk: &DocumentChunk,
    llm: &dyn ChatClient,
    store: Option<&ArtifactStore>,
) -> Result<ChunkWork, PipelineError> {
    if let Some(s) = store {
        s.save_chunk(chunk)?;
        if let Some(done) = s.load_extraction(&chunk.id)? {
            if done.status == ExtractionStatus::Ok {
                return Ok(ChunkWork::Done(s.load_context(&chunk.id)?, done, true));
            }
        }
    }
    let ctx = match store.map(|s| s.load_context(&chunk.id)).transpose()?.flatten() {
        Some(ctx) => ctx,
        None => match distill_chunk(chunk, llm) {
            Ok(ctx) => {
                if let Some(s) = store {
                    s.save_context(&chunk.id, &ctx)?;
                }
                ctx
            }
            Err(e) => return Ok(ChunkWork::DistillFailed(e)),
        },
    };
    let result = extract_triples(&chunk.id, &ctx, llm);
    if let Some(s) = store {
        s.save_extraction(&result)?;
    }
    Ok(ChunkWork::Done(Some(ctx), result, false))
}

/// Chunks every document, distills and extracts each chunk, re-sweeps
/// failures once and assembles the corpus graph. Results are ordered by
/// chunk id regardless of scheduling.
pub fn run_corpus(
    documents: &[(String, String)],
    llm: &dyn ChatClient,
    options: CorpusOptions,
    store: Option<&ArtifactStore>,
) -> Result<CorpusOutcome, PipelineError> {
    let mut chunks = Vec::new();
    for (doc_id, text) in documents {
        chunks.extend(chunk_document(doc_id, text, options.target_words)?);
    }
    chunks.sort_by(|a, b| a.id.cmp(&b.id));
    let ids: BTreeSet<&str> = chunks.iter().map(|c| c.id.as_str()).collect();
    if ids.len() != chunks.len() {
        return Err(PipelineError::InvalidArgument("duplicate chunk ids; document ids must be unique".into()));
    }

    let work: Vec<Result<ChunkWork, PipelineError>> = if options.parallelism <= 1 {
        chunks.iter().map(|c| process_chunk(c, llm, store)).collect()
    } else {
        let next = Mutex::new(0usize);
        let slots: Vec<Mutex<Option<Result<ChunkWork, PipelineError>>>> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..options.parallelism.min(chunks.len()) {
                scope.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("work lock");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    let Some(chunk) = chunks.get(i) else { break };
                    *slots[i].lock().expect("slot lock") = Some(process_chunk(chunk, llm, store));
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every chunk processed"))
            .collect()
    };

    let mut contexts = BTreeMap::new();
    let mut results = Vec::new();
    let mut distill_failures = Vec::new();
    let mut resumed = BTreeSet::new();
    for (chunk, w) in chunks.iter().zip(work) {
        match w? {
            ChunkWork::Done(ctx, result, from_store) => {
                if let Some(ctx) = ctx {
                    contexts.insert(chunk.id.clone(), ctx);
                }
                if from_store {
                    resumed.insert(chunk.id.clone());
                }
                results.push(result);
            }
            ChunkWork::DistillFailed(e) => {
                log::warn!("{e}");
                distill_failures.push(e);
            }
        }
    }
    if options.retry {
        results = retry_failed(results, &contexts, llm);
        if let Some(s) = store {
            for r in &results {
                s.save_extraction(r)?;
            }
        }
    }
    let graph = build_corpus_graph(&results)?;
    Ok(CorpusOutcome { chunks, contexts, results, distill_failures, resumed, graph })
}
