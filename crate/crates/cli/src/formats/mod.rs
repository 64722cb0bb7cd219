//! On-disk formats: GraphML, triples JSON, HTML viewer and CSV/JSON reports.

pub mod graphml;
pub mod html;
pub mod reports;
pub mod triples;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use kgraph_core::{GraphError, KnowledgeGraph};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported graph file '{0}' (expected .graphml or .json)")]
    UnknownExtension(String),
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

/// Loads a graph from `.graphml` or triples `.json`, chosen by extension.
pub fn load_graph(path: &Path) -> Result<KnowledgeGraph, FormatError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("graphml") | Some("xml") => graphml::import_graphml(path),
        Some("json") => Ok(triples::import_triples_json(path)?.graph),
        _ => Err(FormatError::UnknownExtension(path.display().to_string())),
    }
}
