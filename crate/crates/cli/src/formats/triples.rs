//! Triples JSON: an array of `{"node_1", "node_2", "edge"}` objects.

use std::path::Path;

use kgraph_core::graph::RELATION_SEPARATOR;
use kgraph_core::{build_from_triples, KnowledgeGraph, Triple};
use kgraph_llm::{normalize_quotes, triples_to_json};
use serde_json::Value;

use super::{read_text, write_text, FormatError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordRejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ImportedTriples {
    pub triples: Vec<Triple>,
    pub rejected: Vec<RecordRejection>,
    pub graph: KnowledgeGraph,
}

/// Expands a graph into triples that rebuild it: every relation part of an
/// edge appears once, and the last part repeats until the triple count
/// equals the edge multiplicity. Isolated nodes are not representable.
pub fn graph_triples(graph: &KnowledgeGraph) -> Vec<Triple> {
    let mut out = Vec::new();
    for edge in graph.edges() {
        let a = graph.label(edge.source).expect("edge endpoint exists");
        let b = graph.label(edge.target).expect("edge endpoint exists");
        let parts: Vec<&str> = edge.relations().collect();
        let m = edge.multiplicity as usize;
        let mut relations: Vec<String> = if parts.len() <= m {
            parts.iter().map(|p| p.to_string()).collect()
        } else {
            vec![parts.join(RELATION_SEPARATOR)]
        };
        let last = parts.last().map_or(String::new(), |p| p.to_string());
        while relations.len() < m {
            relations.push(last.clone());
        }
        out.extend(relations.iter().map(|r| Triple::new(a, r, b)));
    }
    out
}

pub fn export_triples_json(triples: &[Triple], path: &Path) -> Result<(), FormatError> {
    let mut text = triples_to_json(triples);
    text.push('\n');
    write_text(path, &text)
}

pub fn export_graph_triples_json(graph: &KnowledgeGraph, path: &Path) -> Result<(), FormatError> {
    export_triples_json(&graph_triples(graph), path)
}

fn record(item: &Value) -> Result<Triple, String> {
    let obj = item.as_object().ok_or_else(|| "record is not an object".to_string())?;
    let field = |k: &str| match obj.get(k) {
        Some(Value::String(s)) => Ok(s.as_str()),
        Some(_) => Err(format!("key '{k}' is not a string")),
        None => Err(format!("missing key '{k}'")),
    };
    let (a, r, b) = (field("node_1")?, field("edge")?, field("node_2")?);
    Ok(Triple::new(a, r, b))
}

/// Parses a triples document. Python-style single quotes are accepted.
/// Records that lack a key, carry a non-string value or fail triple
/// validation are rejected individually by array index.
pub fn parse_triples_json(text: &str) -> Result<ImportedTriples, FormatError> {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(first) => serde_json::from_str(&normalize_quotes(text)).map_err(|_| FormatError::Json(first.to_string()))?,
    };
    let Value::Array(items) = value else {
        return Err(FormatError::Json("top-level value is not an array".into()));
    };
    let mut triples = Vec::new();
    let mut origin = Vec::new();
    let mut rejected = Vec::new();
    for (index, item) in items.iter().enumerate() {
        match record(item) {
            Ok(t) => {
                triples.push(t);
                origin.push(index);
            }
            Err(reason) => rejected.push(RecordRejection { index, reason }),
        }
    }
    let built = build_from_triples(&triples);
    let mut bad = Vec::new();
    for r in &built.rejected {
        bad.push(r.index);
        rejected.push(RecordRejection { index: origin[r.index], reason: r.error.to_string() });
    }
    rejected.sort_by_key(|r| r.index);
    let triples = triples
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !bad.contains(i))
        .map(|(_, t)| t)
        .collect();
    Ok(ImportedTriples { triples, rejected, graph: built.graph })
}

pub fn import_triples_json(path: &Path) -> Result<ImportedTriples, FormatError> {
    parse_triples_json(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_array_is_empty_graph() {
        let imported = parse_triples_json("[]").unwrap();
        assert!(imported.graph.is_empty());
        assert!(imported.rejected.is_empty());
    }

    #[test]
    fn rejections_carry_indices() {
        let text = r#"[
            {"node_1": "a", "node_2": "b", "edge": "r"},
            {"node_1": "a", "edge": "r"},
            {"node_1": "c", "node_2": "C", "edge": "r"},
            {"node_1": "a", "node_2": 3, "edge": "r"},
            "text"
        ]"#;
        let imported = parse_triples_json(text).unwrap();
        let idx: Vec<usize> = imported.rejected.iter().map(|r| r.index).collect();
        assert_eq!(idx, [1, 2, 3, 4]);
        assert!(imported.rejected[0].reason.contains("node_2"));
        assert_eq!(imported.triples.len(), 1);
        assert_eq!(imported.graph.edge_count(), 1);
    }

    #[test]
    fn single_quotes_are_accepted() {
        let imported = parse_triples_json("[{'node_1': 'Silk', 'node_2': 'fiber', 'edge': 'is'}]").unwrap();
        assert_eq!(imported.triples, vec![Triple::new("silk", "is", "fiber")]);
        assert!(parse_triples_json("{\"node_1\": 1}").is_err());
        assert!(parse_triples_json("not json").is_err());
    }

    #[test]
    fn multiplicity_survives_graph_export() {
        let triples = [
            Triple::new("a", "r1", "b"),
            Triple::new("a", "r2", "b"),
            Triple::new("b", "r1", "a"),
            Triple::new("b", "r1", "c"),
        ];
        let g = build_from_triples(&triples).graph;
        let back = parse_triples_json(&triples_to_json(&graph_triples(&g))).unwrap().graph;
        assert!(back.same_structure(&g));
    }
}
