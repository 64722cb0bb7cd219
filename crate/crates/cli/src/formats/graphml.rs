//! GraphML reader and writer.
//!
//! Nodes carry `label` and `aliases` data, edges carry `relation`,
//! `multiplicity` and `chunks`; graph metadata is stored as one JSON blob.
//! Node ids are written as `n{id}` and read back verbatim when they follow
//! that shape, so a round trip reproduces the graph exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use kgraph_core::{GraphError, KnowledgeGraph, NodeId};
use quick_xml::events::{BytesDecl, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use super::{read_text, write_text, FormatError};

pub const GRAPHML_NS: &str = "http://graphml.graphdrawing.org/xmlns";

const KEYS: [(&str, &str, &str); 6] = [
    ("label", "node", "string"),
    ("aliases", "node", "string"),
    ("relation", "edge", "string"),
    ("multiplicity", "edge", "int"),
    ("chunks", "edge", "string"),
    ("metadata", "graph", "string"),
];

/// Serializes `graph`; output depends only on the graph contents.
pub fn graphml_string(graph: &KnowledgeGraph) -> String {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    let result: quick_xml::Result<()> = (|| {
        w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
        w.create_element("graphml")
            .with_attribute(("xmlns", GRAPHML_NS))
            .write_inner_content(|w| {
                for (id, target, ty) in KEYS {
                    w.create_element("key")
                        .with_attributes([("id", id), ("for", target), ("attr.name", id), ("attr.type", ty)])
                        .write_empty()?;
                }
                w.create_element("graph")
                    .with_attributes([("id", "G"), ("edgedefault", "undirected")])
                    .write_inner_content(|w| write_graph_body(w, graph))?;
                Ok::<(), quick_xml::Error>(())
            })?;
        Ok(())
    })();
    result.expect("writing to memory cannot fail");
    let mut text = String::from_utf8(w.into_inner()).expect("writer emits utf-8");
    text.push('\n');
    text
}

fn data(w: &mut Writer<Vec<u8>>, key: &str, value: &str) -> quick_xml::Result<()> {
    w.create_element("data")
        .with_attribute(("key", key))
        .write_text_content(BytesText::new(value))?;
    Ok(())
}

fn write_graph_body(w: &mut Writer<Vec<u8>>, graph: &KnowledgeGraph) -> quick_xml::Result<()> {
    if !graph.metadata.is_empty() {
        data(w, "metadata", &serde_json::to_string(&graph.metadata).expect("string map serializes"))?;
    }
    for node in graph.nodes() {
        let id = format!("n{}", node.id.0);
        w.create_element("node").with_attribute(("id", id.as_str())).write_inner_content(|w| {
            data(w, "label", &node.label)?;
            if !node.aliases.is_empty() {
                data(w, "aliases", &serde_json::to_string(&node.aliases).expect("strings serialize"))?;
            }
            Ok::<(), quick_xml::Error>(())
        })?;
    }
    for (i, edge) in graph.edges().enumerate() {
        let (id, s, t) = (format!("e{i}"), format!("n{}", edge.source.0), format!("n{}", edge.target.0));
        w.create_element("edge")
            .with_attributes([("id", id.as_str()), ("source", s.as_str()), ("target", t.as_str())])
            .write_inner_content(|w| {
                data(w, "relation", &edge.relation)?;
                data(w, "multiplicity", &edge.multiplicity.to_string())?;
                if !edge.chunks.is_empty() {
                    data(w, "chunks", &serde_json::to_string(&edge.chunks).expect("strings serialize"))?;
                }
                Ok::<(), quick_xml::Error>(())
            })?;
    }
    Ok(())
}

pub fn export_graphml(graph: &KnowledgeGraph, path: &Path) -> Result<(), FormatError> {
    write_text(path, &graphml_string(graph))
}

pub fn import_graphml(path: &Path) -> Result<KnowledgeGraph, FormatError> {
    parse_graphml(&read_text(path)?)
}

#[derive(Default)]
struct RawNode {
    xml_id: String,
    line: usize,
    data: BTreeMap<String, String>,
}

#[derive(Default)]
struct RawEdge {
    source: String,
    target: String,
    line: usize,
    data: BTreeMap<String, String>,
}

enum Owner {
    Graph,
    Node(usize),
    Edge(usize),
}

struct LineIndex(Vec<usize>);

impl LineIndex {
    fn new(text: &str) -> Self {
        Self(text.match_indices('\n').map(|(i, _)| i).collect())
    }

    fn line(&self, offset: usize) -> usize {
        self.0.partition_point(|&nl| nl < offset) + 1
    }
}

fn attr(e: &BytesStart, name: &str, line: usize) -> Result<Option<String>, FormatError> {
    for a in e.attributes() {
        let a = a.map_err(|err| FormatError::Parse { line, message: err.to_string() })?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a.unescape_value().map_err(|err| FormatError::Parse { line, message: err.to_string() })?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn required(e: &BytesStart, name: &str, element: &str, line: usize) -> Result<String, FormatError> {
    attr(e, name, line)?.ok_or_else(|| FormatError::Parse {
        line,
        message: format!("<{element}> without '{name}' attribute"),
    })
}

/// Parses a GraphML document. Keys are resolved through `attr.name`, so
/// files from other tools load as long as they name a `label` attribute;
/// nodes without one use their XML id as label.
pub fn parse_graphml(text: &str) -> Result<KnowledgeGraph, FormatError> {
    let lines = LineIndex::new(text);
    let mut reader = Reader::from_str(text);
    let mut key_names: HashMap<String, String> = HashMap::new();
    let mut nodes: Vec<RawNode> = Vec::new();
    let mut edges: Vec<RawEdge> = Vec::new();
    let mut graph_data: BTreeMap<String, String> = BTreeMap::new();
    let mut owner: Option<Owner> = None;
    let mut open_data: Option<(String, String)> = None;
    let mut saw_graph = false;

    loop {
        let offset = reader.buffer_position();
        let line = lines.line(offset);
        let event = reader
            .read_event()
            .map_err(|e| FormatError::Parse { line: lines.line(reader.buffer_position()), message: e.to_string() })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                match e.local_name().as_ref() {
                    b"key" => {
                        let id = required(e, "id", "key", line)?;
                        let name = attr(e, "attr.name", line)?.unwrap_or_else(|| id.clone());
                        key_names.insert(id, name);
                    }
                    b"graph" => {
                        saw_graph = true;
                        if !empty {
                            owner = Some(Owner::Graph);
                        }
                    }
                    b"node" => {
                        nodes.push(RawNode { xml_id: required(e, "id", "node", line)?, line, ..Default::default() });
                        if !empty {
                            owner = Some(Owner::Node(nodes.len() - 1));
                        }
                    }
                    b"edge" => {
                        edges.push(RawEdge {
                            source: required(e, "source", "edge", line)?,
                            target: required(e, "target", "edge", line)?,
                            line,
                            ..Default::default()
                        });
                        if !empty {
                            owner = Some(Owner::Edge(edges.len() - 1));
                        }
                    }
                    b"data" => {
                        let key = required(e, "key", "data", line)?;
                        let name = key_names.get(&key).cloned().unwrap_or(key);
                        if empty {
                            store(&mut owner, &mut nodes, &mut edges, &mut graph_data, name, String::new());
                        } else {
                            open_data = Some((name, String::new()));
                        }
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let Some((_, buf)) = open_data.as_mut() {
                    let s = t.unescape().map_err(|e| FormatError::Parse { line, message: e.to_string() })?;
                    buf.push_str(&s);
                }
            }
            Event::CData(t) => {
                if let Some((_, buf)) = open_data.as_mut() {
                    buf.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(e) => match e.local_name().as_ref() {
                b"data" => {
                    if let Some((name, value)) = open_data.take() {
                        store(&mut owner, &mut nodes, &mut edges, &mut graph_data, name, value);
                    }
                }
                b"node" | b"edge" => owner = Some(Owner::Graph),
                b"graph" => owner = None,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_graph {
        return Err(FormatError::Parse { line: lines.line(text.len()), message: "no <graph> element".into() });
    }
    assemble(nodes, edges, graph_data)
}

fn store(
    owner: &mut Option<Owner>,
    nodes: &mut [RawNode],
    edges: &mut [RawEdge],
    graph_data: &mut BTreeMap<String, String>,
    name: String,
    value: String,
) {
    match owner {
        Some(Owner::Node(i)) => {
            nodes[*i].data.insert(name, value);
        }
        Some(Owner::Edge(i)) => {
            edges[*i].data.insert(name, value);
        }
        Some(Owner::Graph) => {
            graph_data.insert(name, value);
        }
        None => {}
    }
}

fn native_id(xml_id: &str) -> Option<u64> {
    let digits = xml_id.strip_prefix('n')?;
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    digits.parse().ok()
}

fn json_field<T: serde::de::DeserializeOwned>(value: &str, what: &str, line: usize) -> Result<T, FormatError> {
    serde_json::from_str(value).map_err(|e| FormatError::Parse { line, message: format!("bad {what}: {e}") })
}

fn assemble(
    nodes: Vec<RawNode>,
    edges: Vec<RawEdge>,
    graph_data: BTreeMap<String, String>,
) -> Result<KnowledgeGraph, FormatError> {
    let mut graph = KnowledgeGraph::new();
    if let Some(meta) = graph_data.get("metadata") {
        graph.metadata = json_field(meta, "graph metadata", 1)?;
    }
    // native ids first, then foreign ids numbered after the largest native one
    let mut used = BTreeSet::new();
    let mut assigned: Vec<Option<u64>> = Vec::with_capacity(nodes.len());
    for n in &nodes {
        let id = native_id(&n.xml_id).filter(|id| used.insert(*id));
        assigned.push(id);
    }
    let mut next = used.iter().next_back().map_or(0, |m| m + 1);
    let mut by_xml: HashMap<&str, NodeId> = HashMap::new();
    for (n, id) in nodes.iter().zip(assigned) {
        let id = NodeId(id.unwrap_or_else(|| {
            next += 1;
            next - 1
        }));
        if by_xml.insert(n.xml_id.as_str(), id).is_some() {
            return Err(FormatError::Parse { line: n.line, message: format!("duplicate node id '{}'", n.xml_id) });
        }
        let label = n.data.get("label").map_or(n.xml_id.as_str(), String::as_str);
        graph.insert_node(id, label).map_err(|e| FormatError::Parse { line: n.line, message: e.to_string() })?;
        if let Some(aliases) = n.data.get("aliases") {
            for alias in json_field::<Vec<String>>(aliases, "aliases", n.line)? {
                graph.add_alias(id, &alias)?;
            }
        }
    }
    for e in &edges {
        let endpoint = |x: &str| {
            by_xml.get(x).copied().ok_or_else(|| FormatError::Parse {
                line: e.line,
                message: format!("edge references missing node '{x}'"),
            })
        };
        let (a, b) = (endpoint(&e.source)?, endpoint(&e.target)?);
        let multiplicity = match e.data.get("multiplicity") {
            Some(m) => m.trim().parse::<u32>().ok().filter(|m| *m > 0).ok_or_else(|| FormatError::Parse {
                line: e.line,
                message: format!("multiplicity '{m}' is not a positive integer"),
            })?,
            None => 1,
        };
        let chunks: Vec<String> = match e.data.get("chunks") {
            Some(c) => json_field(c, "chunks", e.line)?,
            None => Vec::new(),
        };
        let relation = e.data.get("relation").map_or("", String::as_str);
        graph.add_edge(a, b, relation, multiplicity, chunks).map_err(|err| match err {
            GraphError::SelfLoop(_) => FormatError::Parse {
                line: e.line,
                message: format!("self-loop on node '{}'", e.source),
            },
            other => FormatError::Graph(other),
        })?;
    }
    graph.check_invariants()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgraph_core::{build_from_triples, Triple};

    fn sample() -> KnowledgeGraph {
        let triples = [
            Triple::new("Silk", "is a", "fiber").with_source("d-0000"),
            Triple::new("silk", "made of", "fiber").with_source("d-0001"),
            Triple::new("beta-sheets", "control <strength> & \"toughness\"", "silk"),
        ];
        let mut g = build_from_triples(&triples).graph;
        let id = g.find("silk").unwrap();
        g.add_alias(id, "spider silk").unwrap();
        g
    }

    #[test]
    fn round_trip_is_exact() {
        let g = sample();
        let text = graphml_string(&g);
        let back = parse_graphml(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(graphml_string(&back), text);
    }

    #[test]
    fn empty_graph_has_no_nodes() {
        let text = graphml_string(&KnowledgeGraph::new());
        assert!(!text.contains("<node"));
        assert!(parse_graphml(&text).unwrap().is_empty());
    }

    #[test]
    fn missing_endpoint_reports_line() {
        let text = r#"<?xml version="1.0"?>
<graphml>
  <key id="d0" for="node" attr.name="label"/>
  <graph edgedefault="undirected">
    <node id="a"><data key="d0">A</data></node>
    <edge source="a" target="b"/>
  </graph>
</graphml>"#;
        match parse_graphml(text) {
            Err(FormatError::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("'b'"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn foreign_ids_and_key_names() {
        let text = r#"<graphml>
  <key id="d0" for="node" attr.name="label"/>
  <key id="d1" for="edge" attr.name="relation"/>
  <graph edgedefault="undirected">
    <node id="x"><data key="d0">Alpha</data></node>
    <node id="n3"><data key="d0">beta</data></node>
    <node id="gamma"/>
    <edge source="x" target="n3"><data key="d1">links</data></edge>
    <edge source="n3" target="x"><data key="d1">again</data></edge>
    <edge source="gamma" target="x"/>
  </graph>
</graphml>"#;
        let g = parse_graphml(text).unwrap();
        assert_eq!(g.find("beta"), Some(NodeId(3)));
        assert_eq!(g.find("alpha"), Some(NodeId(4)));
        assert_eq!(g.find("gamma"), Some(NodeId(5)));
        let e = g.edge(NodeId(3), NodeId(4)).unwrap();
        assert_eq!((e.relation.as_str(), e.multiplicity), ("links; again", 2));
    }

    #[test]
    fn malformed_xml_and_self_loops_are_rejected() {
        assert!(matches!(parse_graphml("<graphml><graph><node id=\"a\"></graph>"), Err(FormatError::Parse { .. })));
        let looped = "<graphml><graph>\n<node id=\"a\"/>\n<edge source=\"a\" target=\"a\"/></graph></graphml>";
        assert!(matches!(parse_graphml(looped), Err(FormatError::Parse { line: 3, .. })));
        assert!(parse_graphml("<graphml/>").is_err());
    }
}
