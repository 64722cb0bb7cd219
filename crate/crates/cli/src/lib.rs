//! Command-line front end and file formats for kgraph.

pub mod commands;
pub mod config;
pub mod formats;

pub use commands::{run, Cli, Command};
pub use config::{ConfigError, RunConfig};
pub use formats::graphml::{export_graphml, graphml_string, import_graphml, parse_graphml};
pub use formats::html::{export_html, html_string, HtmlOptions, Sizing};
pub use formats::triples::{
    export_graph_triples_json, export_triples_json, graph_triples, import_triples_json, parse_triples_json,
};
pub use formats::{load_graph, FormatError};
