use std::collections::BTreeSet;

use kgraph_cli::formats::html::embedded_data;
use kgraph_cli::{
    export_graphml, graph_triples, graphml_string, html_string, import_graphml, parse_graphml, parse_triples_json,
    HtmlOptions,
};
use kgraph_core::{build_from_triples, KnowledgeGraph, NodeId, Triple};
use kgraph_llm::triples_to_json;
use proptest::prelude::*;

const ALPHABET: &str = "[a-z][a-z<>&\"' é中]{0,9}";

fn graph() -> impl Strategy<Value = KnowledgeGraph> {
    (1usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(ALPHABET, n),
            prop::collection::vec((0..n, 0..n, "[a-z &<]{0,8}", 1u32..4, prop::option::of("[a-z0-9-]{1,6}")), 0..2 * n),
            prop::collection::vec((0..n, ALPHABET), 0..4),
            prop::collection::btree_map("[a-z_]{1,6}", "[ -~]{0,12}", 0..3),
        )
            .prop_map(|(labels, edges, aliases, metadata)| {
                let mut g = KnowledgeGraph::new();
                let mut ids = Vec::new();
                for label in &labels {
                    match g.add_node(label) {
                        Ok(id) => ids.push(id),
                        Err(_) => ids.push(g.find(&kgraph_core::graph::normalize_label(label)).unwrap()),
                    }
                }
                for (a, b, rel, m, chunk) in edges {
                    let _ = g.add_edge(ids[a], ids[b], &rel, m, chunk);
                }
                for (i, alias) in aliases {
                    g.add_alias(ids[i], &alias).unwrap();
                }
                g.metadata = metadata;
                g
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn graphml_round_trips_exactly(g in graph()) {
        let text = graphml_string(&g);
        let back = parse_graphml(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(graphml_string(&back), text);
    }

    #[test]
    fn triples_export_keeps_connected_structure(g in graph()) {
        let triples = graph_triples(&g);
        let imported = parse_triples_json(&triples_to_json(&triples)).unwrap();
        prop_assert!(imported.rejected.is_empty());
        let h = imported.graph;
        let linked: BTreeSet<&str> =
            g.edges().flat_map(|e| [g.label(e.source).unwrap(), g.label(e.target).unwrap()]).collect();
        let labels: BTreeSet<&str> = h.nodes().map(|n| n.label.as_str()).collect();
        prop_assert_eq!(labels, linked);
        prop_assert_eq!(h.edge_count(), g.edge_count());
        prop_assert_eq!(h.total_multiplicity(), g.total_multiplicity());
        for e in g.edges() {
            let (a, b) = (h.find(g.label(e.source).unwrap()).unwrap(), h.find(g.label(e.target).unwrap()).unwrap());
            prop_assert_eq!(&h.edge(a, b).unwrap().relation, &e.relation);
        }
    }

    #[test]
    fn viewer_payload_survives_embedding(g in graph()) {
        let data = embedded_data(&html_string(&g, &HtmlOptions::default())).unwrap();
        prop_assert_eq!(data.nodes.len(), g.node_count());
        prop_assert_eq!(data.edges.len(), g.edge_count());
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_from_triples(&[
        Triple::new("silk", "is made of", "fibroin"),
        Triple::new("fibroin", "is a", "protein"),
        Triple::new("silk", "is made of", "fibroin"),
    ])
    .graph;
    let path = dir.path().join("nested/graph.graphml");
    export_graphml(&g, &path).unwrap();
    assert_eq!(import_graphml(&path).unwrap(), g);
    assert_eq!(kgraph_cli::load_graph(&path).unwrap(), g);
    assert!(kgraph_cli::load_graph(&dir.path().join("graph.csv")).is_err());
}

#[test]
fn foreign_graphml_is_accepted() {
    let text = r#"<?xml version="1.0"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key id="d0" for="edge" attr.name="relation" attr.type="string"/>
  <graph edgedefault="undirected">
    <node id="a"/>
    <node id="b"/>
    <node id="n3"/>
    <edge source="a" target="b"><data key="d0">links</data></edge>
    <edge source="b" target="n3"/>
  </graph>
</graphml>"#;
    let g = parse_graphml(text).unwrap();
    assert_eq!(g.node_count(), 3);
    assert_eq!(g.edge_count(), 2);
    let (a, b) = (g.find("a").unwrap(), g.find("b").unwrap());
    assert_eq!(g.edge(a, b).unwrap().relation, "links");
    assert_eq!(g.find("n3"), Some(NodeId(3)));
    assert!(a.0 > 3 && b.0 > 3);
}

#[test]
fn broken_documents_report_a_line() {
    let err = parse_graphml("<graphml>\n<graph>\n<edge source=\"x\" target=\"y\"/>\n</graph>\n</graphml>")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 3"), "{err}");
    assert!(parse_graphml("<graphml><graph><node id=\"a\"></graph>").is_err());
}
