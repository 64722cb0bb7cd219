//! JSON and CSV report writers for the analysis commands.

use std::path::Path;

use kgraph_core::stats::{
    avg_clustering, degree_histogram_log1p, degree_stats, CcdfRow, CommunityPartition, DegreeStats, Histogram,
};
use kgraph_core::{KnowledgeGraph, StatsError};
use serde::{Deserialize, Serialize};

use super::{write_text, FormatError};

pub const DEFAULT_BINS: usize = 20;
pub const TOP_DEGREE_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub label: String,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub degree: DegreeStats<f64>,
    pub avg_clustering: f64,
    pub histogram: Histogram<f64>,
    pub top_nodes: Vec<RankedNode>,
}

/// Highest-degree nodes, ties broken by label.
pub fn top_degree_nodes(graph: &KnowledgeGraph, n: usize) -> Vec<RankedNode> {
    let mut ranked: Vec<RankedNode> =
        graph.nodes().map(|node| RankedNode { label: node.label.clone(), degree: graph.degree(node.id) }).collect();
    ranked.sort_by(|a, b| b.degree.cmp(&a.degree).then_with(|| a.label.cmp(&b.label)));
    ranked.truncate(n);
    ranked
}

pub fn stats_report(graph: &KnowledgeGraph, bins: usize) -> Result<StatsReport, StatsError> {
    Ok(StatsReport {
        degree: degree_stats(graph)?,
        avg_clustering: avg_clustering(graph),
        histogram: degree_histogram_log1p(graph, bins)?,
        top_nodes: top_degree_nodes(graph, TOP_DEGREE_NODES),
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::Json(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn csv_text<R: Serialize>(rows: impl IntoIterator<Item = R>, header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.serialize(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// One row per bin: left edge on the `log1p(degree)` axis and count.
pub fn histogram_csv(hist: &Histogram<f64>) -> String {
    csv_text(hist.edges.iter().zip(&hist.counts), &["bin_edge", "count"])
}

pub fn ccdf_csv(rows: &[CcdfRow<f64>]) -> String {
    csv_text(rows.iter().map(|r| (r.degree, r.empirical_ccdf, r.fitted_ccdf)), &["degree", "empirical_ccdf", "fitted_ccdf"])
}

/// Membership table: node id, label and community index.
pub fn membership_csv(graph: &KnowledgeGraph, partition: &CommunityPartition<f64>) -> String {
    let membership = partition.membership();
    csv_text(
        graph.nodes().map(|n| (n.id.0, n.label.as_str(), membership.get(&n.id).copied())),
        &["node", "label", "community"],
    )
}

pub fn write_csv(text: &str, path: &Path) -> Result<(), FormatError> {
    write_text(path, text)
}
