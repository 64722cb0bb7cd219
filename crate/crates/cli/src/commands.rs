//! Command-line verbs. Every command writes only inside the run directory
//! (plus an explicit `--out`/`--context-out` path) and returns a JSON
//! summary that `main` prints.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgraph_core::paths::DEFAULT_INSTRUCTION;
use kgraph_core::stats::{
    ccdf_rows, cluster_report, community_report, degree_sequence, detect_communities, fit_power_law,
    ClusterOptions, CommunityMethod,
};
use kgraph_core::{
    assemble_context, embed_nodes, find_isomorphic_subgraphs, find_paths, mapping_report, serialize_path,
    KnowledgeGraph,
};
use kgraph_llm::{
    augment_graph, run_agent_duet, run_corpus, strip_markup, summarize_transcript, AgentPersona, ArtifactStore,
    DuetError, ExtractionStatus,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::formats::graphml::export_graphml;
use crate::formats::html::{export_html, HtmlOptions, Sizing};
use crate::formats::reports::{
    ccdf_csv, histogram_csv, membership_csv, stats_report, write_csv, write_json, DEFAULT_BINS,
};
use crate::formats::triples::{export_graph_triples_json, export_triples_json};
use crate::formats::load_graph;

pub const GRAPHS_DIR: &str = "graphs";
pub const REPORTS_DIR: &str = "reports";
pub const TRANSCRIPTS_DIR: &str = "transcripts";
pub const RUN_MANIFEST: &str = "run.json";
pub const CORPUS_GRAPH: &str = "corpus.graphml";

/// File extensions read by `ingest`; all but `.txt` go through markup stripping.
pub const CORPUS_EXTENSIONS: [&str; 7] = ["txt", "md", "markdown", "html", "htm", "xml", "tex"];

#[derive(Debug, Parser)]
#[command(name = "kgraph", version, about = "Build, analyze and reason over knowledge graphs extracted from text")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory (overrides the config file).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Seed for mock embeddings, clustering and layouts (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print results as JSON and report errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk, distill and extract a corpus into a graph.
    Ingest(IngestArgs),
    /// Degree statistics, clustering coefficient and degree histogram.
    Stats(StatsArgs),
    /// Community detection with per-community summaries.
    Communities(CommunitiesArgs),
    /// Discrete power-law fit of the degree distribution.
    FitPowerlaw(GraphArg),
    /// Shortest paths between the best embedding matches of two terms.
    Path(PathArgs),
    /// Isomorphic subgraphs shared by two graphs.
    Isomorph(IsomorphArgs),
    /// Compose a new graph (or text document) into a global graph.
    Augment(AugmentArgs),
    /// Two-agent conversation, saved as a transcript.
    Duet(DuetArgs),
    /// Convert a graph to GraphML, triples JSON or an HTML viewer.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GraphArg {
    /// Graph file (.graphml or triples .json).
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus directory or a single document.
    pub corpus: PathBuf,
    /// JSON list of scripted chat replies, replacing the configured provider.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub target_words: Option<usize>,
    /// Merge near-duplicate labels and prune small components afterwards.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub graph: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Also cluster node embeddings into this many groups.
    #[arg(long)]
    pub clusters: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Greedy,
    GirvanNewman,
}

#[derive(Debug, Args)]
pub struct CommunitiesArgs {
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "greedy")]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    pub graph: PathBuf,
    pub term_a: String,
    pub term_b: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub hops: Option<usize>,
    /// Where to write the assembled context (defaults to the reports directory).
    #[arg(long)]
    pub context_out: Option<PathBuf>,
    #[arg(long)]
    pub instruction: Option<String>,
}

#[derive(Debug, Args)]
pub struct IsomorphArgs {
    pub g1: PathBuf,
    pub g2: PathBuf,
    #[arg(long)]
    pub min_nodes: Option<usize>,
    #[arg(long)]
    pub min_avg_degree: Option<f64>,
    #[arg(long)]
    pub max_mappings: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    /// Search whole graphs instead of their giant components.
    #[arg(long)]
    pub full: bool,
    /// Require matched nodes to share labels.
    #[arg(long)]
    pub exact_labels: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    pub global: PathBuf,
    /// Graph file, or a text document that is first ingested.
    pub addition: PathBuf,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Remove components smaller than this (0 keeps all).
    #[arg(long)]
    pub prune_threshold: Option<usize>,
    /// Keep every component instead of only the giant one.
    #[arg(long)]
    pub keep_all: bool,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DuetArgs {
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub turns: Option<usize>,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub no_summary: bool,
    /// Transcript name inside the transcripts directory.
    #[arg(long, default_value = "duet")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    Graphml,
    Triples,
    Html,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SizingArg {
    Degree,
    Bridging,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "degree")]
    pub sizing: SizingArg,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Stats(_) => "stats",
            Command::Communities(_) => "communities",
            Command::FitPowerlaw(_) => "fit-powerlaw",
            Command::Path(_) => "path",
            Command::Isomorph(_) => "isomorph",
            Command::Augment(_) => "augment",
            Command::Duet(_) => "duet",
            Command::Export(_) => "export",
        }
    }
}

/// Resolved configuration plus the run directory helpers.
pub struct Run {
    pub config: RunConfig,
}

impl Run {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &cli.run_dir {
            config.run_dir = dir.clone();
        }
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        Ok(Self { config })
    }

    pub fn dir(&self, sub: &str) -> Result<PathBuf> {
        let path = self.config.run_dir.join(sub);
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(path)
    }

    fn graph_out(&self, name: &str) -> Result<PathBuf> {
        Ok(self.dir(GRAPHS_DIR)?.join(name))
    }

    fn report(&self, name: &str) -> Result<PathBuf> {
        Ok(self.dir(REPORTS_DIR)?.join(name))
    }

    /// Appends this invocation to `run.json`.
    fn record(&self, command: &str, parameters: Value) -> Result<()> {
        fs::create_dir_all(&self.config.run_dir)?;
        let path = self.config.run_dir.join(RUN_MANIFEST);
        let mut history: Vec<Value> = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<Value>(&t).ok())
            .and_then(|v| v.get("commands").and_then(Value::as_array).cloned())
            .unwrap_or_default();
        history.push(json!({ "command": command, "parameters": parameters }));
        let manifest = json!({
            "versions": {
                "kgraph": env!("CARGO_PKG_VERSION"),
            },
            "seed": self.config.seed,
            "config": self.config,
            "commands": history,
        });
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

pub fn run(cli: &Cli) -> Result<Value> {
    let mut run = Run::from_cli(cli)?;
    let summary = match &cli.command {
        Command::Ingest(a) => ingest(&mut run, a)?,
        Command::Stats(a) => stats(&run, a)?,
        Command::Communities(a) => communities(&run, a)?,
        Command::FitPowerlaw(a) => fit_powerlaw(&run, a)?,
        Command::Path(a) => path(&mut run, a)?,
        Command::Isomorph(a) => isomorph(&mut run, a)?,
        Command::Augment(a) => augment(&mut run, a)?,
        Command::Duet(a) => duet(&mut run, a)?,
        Command::Export(a) => export(&run, a)?,
    };
    run.record(cli.command.name(), summary.get("parameters").cloned().unwrap_or(Value::Null))?;
    Ok(summary)
}

fn load(path: &Path) -> Result<KnowledgeGraph> {
    load_graph(path).with_context(|| format!("loading {}", path.display()))
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("summaries serialize")
}

/// Reads a document or every supported file of a directory, sorted by name.
pub fn read_corpus(path: &Path) -> Result<Vec<(String, String)>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && corpus_extension(p).is_some())
            .collect();
        files.sort();
        files
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        bail!("corpus {} does not exist", path.display());
    };
    if files.is_empty() {
        bail!("corpus {} holds no {} files", path.display(), CORPUS_EXTENSIONS.join("/"));
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            let text = if corpus_extension(f) == Some("txt") { text } else { strip_markup(&text) };
            let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
            Ok((id, text))
        })
        .collect()
}

fn corpus_extension(path: &Path) -> Option<&'static str> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    CORPUS_EXTENSIONS.into_iter().find(|e| *e == ext)
}

fn ingest(run: &mut Run, a: &IngestArgs) -> Result<Value> {
    if let Some(script) = &a.mock_script {
        run.config.chat.mock_script = Some(script.clone());
    }
    if let Some(words) = a.target_words {
        run.config.pipeline.target_words = words;
    }
    run.config.validate()?;
    let documents = read_corpus(&a.corpus)?;
    let llm = run.config.chat_client()?;
    let store = ArtifactStore::open(&run.config.run_dir)?;
    let outcome = run_corpus(&documents, llm.as_ref(), run.config.corpus_options(), Some(&store))?;
    let mut graph = outcome.graph;
    let mut merged = 0;
    if a.refine {
        let provider = run.config.embedding_provider()?;
        let refined = augment_graph(&KnowledgeGraph::new(), &graph, provider.as_ref(), run.config.augment_options())?;
        merged = refined.merged.len();
        graph = refined.graph;
    }
    let graph_path = run.graph_out(CORPUS_GRAPH)?;
    export_graphml(&graph, &graph_path)?;
    let triples: Vec<_> = outcome.results.iter().flat_map(|r| r.triples.iter().cloned()).collect();
    export_triples_json(&triples, &run.graph_out("corpus_triples.json")?)?;
    let failed: Vec<&str> = outcome
        .results
        .iter()
        .filter(|r| r.status != ExtractionStatus::Ok)
        .map(|r| r.chunk_id.as_str())
        .collect();
    let summary = json!({
        "documents": documents.len(),
        "chunks": outcome.chunks.len(),
        "extracted": outcome.results.len() - failed.len(),
        "failed_extractions": failed,
        "failed_distillations": outcome.distill_failures.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "resumed": outcome.resumed,
        "triples": triples.len(),
        "merge_groups": merged,
        "nodes": graph.node_count(),
        "edges": graph.edge_count(),
        "graph": graph_path,
        "parameters": { "corpus": a.corpus, "refine": a.refine, "target_words": run.config.pipeline.target_words },
    });
    write_json(&summary, &run.report("ingest.json")?)?;
    Ok(summary)
}

fn stats(run: &Run, a: &StatsArgs) -> Result<Value> {
    let graph = load(&a.graph)?;
    let report = stats_report(&graph, a.bins)?;
    write_json(&report, &run.report("stats.json")?)?;
    write_csv(&histogram_csv(&report.histogram), &run.report("degree_histogram.csv")?)?;
    let mut summary = json!({
        "nodes": report.degree.node_count,
        "edges": report.degree.edge_count,
        "avg_degree": report.degree.avg_degree,
        "max_degree": report.degree.max_degree,
        "min_degree": report.degree.min_degree,
        "median_degree": report.degree.median_degree,
        "density": report.degree.density,
        "avg_clustering": report.avg_clustering,
        "top_nodes": report.top_nodes,
        "parameters": { "graph": a.graph, "bins": a.bins, "clusters": a.clusters },
    });
    if let Some(k) = a.clusters {
        let provider = run.config.embedding_provider()?;
        let index = embed_nodes::<f64>(&graph, provider.as_ref(), run.config.embed_options())?;
        let options = ClusterOptions { n_clusters: k, seed: run.config.seed, ..ClusterOptions::default() };
        let clusters = cluster_report(&index, options)?;
        write_json(&clusters, &run.report("clusters.json")?)?;
        summary["clusters"] = json!(clusters
            .clusters
            .iter()
            .map(|c| json!({ "size": c.members.len(), "nearest": c.nearest.iter().map(|n| &n.label).collect::<Vec<_>>() }))
            .collect::<Vec<_>>());
    }
    Ok(summary)
}

fn communities(run: &Run, a: &CommunitiesArgs) -> Result<Value> {
    let graph = load(&a.graph)?;
    let method = match a.method {
        MethodArg::Greedy => CommunityMethod::GreedyModularity,
        MethodArg::GirvanNewman => CommunityMethod::GirvanNewman,
    };
    let partition = detect_communities::<f64>(&graph, method)?;
    let report = community_report::<f64>(&graph, &partition.communities)?;
    write_json(&json!({ "method": method, "modularity": partition.modularity, "report": report }), &run.report("communities.json")?)?;
    write_csv(&membership_csv(&graph, &partition), &run.report("communities.csv")?)?;
    Ok(json!({
        "method": method,
        "communities": partition.communities.len(),
        "modularity": partition.modularity,
        "inter_community_edges": report.inter_community_edges,
        "largest": report.communities.iter().take(5).map(|c| json!({ "size": c.size, "top_nodes": c.top_nodes })).collect::<Vec<_>>(),
        "parameters": { "graph": a.graph, "method": method },
    }))
}

fn fit_powerlaw(run: &Run, a: &GraphArg) -> Result<Value> {
    let graph = load(&a.graph)?;
    let degrees: Vec<u64> = degree_sequence(&graph).into_iter().filter(|d| *d > 0).map(|d| d as u64).collect();
    let fit = fit_power_law::<f64>(&degrees)?;
    write_json(&fit, &run.report("powerlaw.json")?)?;
    write_csv(&ccdf_csv(&ccdf_rows(&degrees, &fit)), &run.report("ccdf.csv")?)?;
    let mut summary = to_value(&fit);
    summary["parameters"] = json!({ "graph": a.graph });
    Ok(summary)
}

fn path(run: &mut Run, a: &PathArgs) -> Result<Value> {
    if let Some(k) = a.k {
        run.config.paths.k = k;
    }
    if let Some(h) = a.hops {
        run.config.paths.expansion_hops = h;
    }
    run.config.validate()?;
    let graph = load(&a.graph)?;
    let provider = run.config.embedding_provider()?;
    let index = embed_nodes::<f32>(&graph, provider.as_ref(), run.config.embed_options())?;
    let query = run.config.path_query(&a.term_a, &a.term_b);
    let bundle = find_paths(&graph, &index, provider.as_ref(), &query)?;
    let instruction = a.instruction.as_deref().unwrap_or(DEFAULT_INSTRUCTION);
    let context = assemble_context(&bundle, instruction)?.to_string();
    let context_path = match &a.context_out {
        Some(p) => p.clone(),
        None => run.report("context.md")?,
    };
    if let Some(dir) = context_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&context_path, context.clone() + "\n").with_context(|| format!("writing {}", context_path.display()))?;
    export_graphml(&bundle.separate_view, &run.graph_out("paths_separate.graphml")?)?;
    export_graphml(&bundle.merged_view, &run.graph_out("paths_merged.graphml")?)?;
    export_graphml(&bundle.expanded, &run.graph_out("paths_expanded.graphml")?)?;
    let slots: Vec<Value> = bundle
        .slots
        .iter()
        .map(|s| {
            json!({
                "rank": [s.rank.0, s.rank.1],
                "source": graph.label(s.source),
                "target": graph.label(s.target),
                "path": s.path.as_ref().map(|p| serialize_path(&p.path)),
                "hops": s.path.as_ref().map(|p| p.path.len()),
                "duplicate_of": s.path.as_ref().and_then(|p| p.duplicate_of).map(|(i, j)| [i, j]),
            })
        })
        .collect();
    let summary = json!({
        "matches_a": bundle.matches_a,
        "matches_b": bundle.matches_b,
        "slots": slots,
        "expanded_nodes": bundle.expanded.node_count(),
        "context": context_path,
        "parameters": { "graph": a.graph, "term_a": a.term_a, "term_b": a.term_b, "query": query },
    });
    write_json(&summary, &run.report("paths.json")?)?;
    Ok(summary)
}

fn isomorph(run: &mut Run, a: &IsomorphArgs) -> Result<Value> {
    let iso = &mut run.config.iso;
    if let Some(v) = a.min_nodes {
        iso.min_nodes = v;
    }
    if let Some(v) = a.min_avg_degree {
        iso.min_avg_degree = v;
    }
    if let Some(v) = a.max_mappings {
        iso.max_mappings = v;
    }
    if let Some(v) = a.timeout_secs {
        iso.pair_timeout_secs = v;
    }
    iso.full_scope |= a.full;
    iso.exact_labels |= a.exact_labels;
    run.config.validate()?;
    let (g1, g2) = (load(&a.g1)?, load(&a.g2)?);
    let constraints = run.config.iso_constraints();
    let search = find_isomorphic_subgraphs(&g1, &g2, &constraints)?;
    let reports = run.dir(REPORTS_DIR)?;
    let mut mappings = Vec::new();
    for (i, m) in search.mappings.iter().enumerate() {
        let report = mapping_report(&g1, &g2, m)?;
        fs::write(reports.join(format!("mapping_{i}.csv")), report.to_csv())?;
        fs::write(reports.join(format!("mapping_{i}.tex")), report.to_latex())?;
        mappings.push(json!({ "nodes": m.len(), "edges": report.edges.len(), "pairs": report.nodes }));
    }
    write_json(&search, &reports.join("isomorph.json"))?;
    Ok(json!({
        "first_candidates": search.first_candidates.len(),
        "second_candidates": search.second_candidates.len(),
        "pairs_tried": search.pairs_tried,
        "skipped": search.skipped.len(),
        "mappings": mappings,
        "parameters": { "g1": a.g1, "g2": a.g2, "iso": run.config.iso },
    }))
}

fn augment(run: &mut Run, a: &AugmentArgs) -> Result<Value> {
    let p = &mut run.config.pipeline;
    if let Some(eta) = a.eta {
        p.eta = eta;
    }
    if let Some(t) = a.prune_threshold {
        p.prune_threshold = t;
    }
    p.giant_only &= !a.keep_all;
    if let Some(script) = &a.mock_script {
        run.config.chat.mock_script = Some(script.clone());
    }
    run.config.validate()?;
    let global = load(&a.global)?;
    let is_graph = matches!(
        a.addition.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("graphml" | "json")
    );
    let addition = if is_graph {
        load(&a.addition)?
    } else {
        let documents = read_corpus(&a.addition)?;
        let llm = run.config.chat_client()?;
        let store = ArtifactStore::open(&run.config.run_dir)?;
        run_corpus(&documents, llm.as_ref(), run.config.corpus_options(), Some(&store))?.graph
    };
    let provider = run.config.embedding_provider()?;
    let outcome = augment_graph(&global, &addition, provider.as_ref(), run.config.augment_options())?;
    let out = match &a.out {
        Some(p) => p.clone(),
        None => run.graph_out("augmented.graphml")?,
    };
    export_graphml(&outcome.graph, &out)?;
    let composed = kgraph_core::compose(&global, &addition);
    let merges: Vec<Value> = outcome
        .merged
        .iter()
        .map(|g| {
            json!({
                "canonical": composed.label(g.canonical),
                "members": g.members.iter().filter_map(|m| composed.label(*m)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let summary = json!({
        "composed_nodes": outcome.composed_nodes,
        "composed_edges": outcome.composed_edges,
        "merge_groups": merges,
        "nodes": outcome.graph.node_count(),
        "edges": outcome.graph.edge_count(),
        "graph": out,
        "parameters": { "global": a.global, "addition": a.addition, "pipeline": run.config.pipeline },
    });
    write_json(&summary, &run.report("augment.json")?)?;
    Ok(summary)
}

fn duet(run: &mut Run, a: &DuetArgs) -> Result<Value> {
    if let Some(q) = &a.question {
        run.config.duet.question = q.clone();
    }
    if let Some(t) = a.turns {
        run.config.duet.turns = t;
    }
    if let Some(script) = &a.mock_script {
        run.config.chat.mock_script = Some(script.clone());
    }
    if a.no_summary {
        run.config.duet.summarize = false;
    }
    run.config.validate()?;
    if a.name.is_empty() || a.name.contains(['/', '\\']) {
        bail!("transcript name must be a plain file name");
    }
    let llm = run.config.chat_client()?;
    let d = &run.config.duet;
    let dir = run.dir(TRANSCRIPTS_DIR)?;
    let save = |t: &kgraph_llm::Transcript| -> Result<()> {
        fs::write(dir.join(format!("{}.json", a.name)), t.to_json() + "\n")?;
        fs::write(dir.join(format!("{}.txt", a.name)), t.full_text() + "\n")?;
        Ok(())
    };
    let mut transcript =
        match run_agent_duet(&d.question, &AgentPersona::chef(), &AgentPersona::engineer(), d.turns, llm.as_ref()) {
            Ok(t) => t,
            Err(DuetError::Chat { source, partial }) => {
                save(&partial)?;
                return Err(anyhow!("duet aborted after {} turn(s): {source}", partial.turns.len()));
            }
            Err(e) => return Err(e.into()),
        };
    if d.summarize {
        summarize_transcript(&mut transcript, llm.as_ref())?;
    }
    save(&transcript)?;
    Ok(json!({
        "turns": transcript.turns.len(),
        "summarized": transcript.summary.is_some(),
        "transcript": dir.join(format!("{}.txt", a.name)),
        "parameters": { "duet": run.config.duet },
    }))
}

fn export(run: &Run, a: &ExportArgs) -> Result<Value> {
    let graph = load(&a.graph)?;
    match a.format {
        ExportFormat::Graphml => export_graphml(&graph, &a.out)?,
        ExportFormat::Triples => export_graph_triples_json(&graph, &a.out)?,
        ExportFormat::Html => {
            let sizing = match a.sizing {
                SizingArg::Degree => Sizing::Degree,
                SizingArg::Bridging => Sizing::Bridging,
            };
            let title = a.graph.file_stem().and_then(|s| s.to_str()).unwrap_or("graph").to_string();
            export_html(&graph, &a.out, &HtmlOptions { sizing, seed: run.config.seed, title })?
        }
    }
    Ok(json!({
        "nodes": graph.node_count(),
        "edges": graph.edge_count(),
        "out": a.out,
        "parameters": { "graph": a.graph, "format": format!("{:?}", a.format).to_lowercase(), "out": a.out },
    }))
}
