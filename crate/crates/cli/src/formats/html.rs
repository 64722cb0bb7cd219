//! Self-contained HTML viewer: graph data embedded as JSON plus a small
//! seeded force layout drawn into SVG. No external resources are loaded.

use std::path::Path;

use kgraph_core::stats::{bridging_centrality, detect_communities, CommunityMethod};
use kgraph_core::KnowledgeGraph;
use serde::{Deserialize, Serialize};

use super::{write_text, FormatError};

pub const MIN_RADIUS: f64 = 4.0;
pub const MAX_RADIUS: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sizing {
    #[default]
    Degree,
    Bridging,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlOptions {
    pub sizing: Sizing,
    pub seed: u64,
    pub title: String,
}

impl Default for HtmlOptions {
    fn default() -> Self {
        Self { sizing: Sizing::Degree, seed: 42, title: "knowledge graph".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewerNode {
    pub id: u64,
    pub label: String,
    pub community: usize,
    pub metric: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewerEdge {
    pub source: u64,
    pub target: u64,
    pub relation: String,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewerData {
    pub title: String,
    pub sizing: Sizing,
    pub seed: u64,
    pub nodes: Vec<ViewerNode>,
    pub edges: Vec<ViewerEdge>,
}

/// Node records with radius scaled linearly from `MIN_RADIUS` (metric 0)
/// to `MAX_RADIUS` (largest metric) and community index from greedy
/// modularity.
pub fn viewer_data(graph: &KnowledgeGraph, options: &HtmlOptions) -> ViewerData {
    let metric: Vec<f64> = match options.sizing {
        Sizing::Degree => graph.nodes().map(|n| graph.degree(n.id) as f64).collect(),
        Sizing::Bridging => {
            let b = bridging_centrality::<f64>(graph);
            graph.nodes().map(|n| b[&n.id]).collect()
        }
    };
    let top = metric.iter().cloned().fold(0.0, f64::max);
    let membership = if graph.edge_count() > 0 {
        detect_communities::<f64>(graph, CommunityMethod::GreedyModularity)
            .map(|p| p.membership())
            .unwrap_or_default()
    } else {
        Default::default()
    };
    let nodes = graph
        .nodes()
        .zip(metric)
        .enumerate()
        .map(|(i, (n, m))| ViewerNode {
            id: n.id.0,
            label: n.label.clone(),
            community: membership.get(&n.id).copied().unwrap_or(i),
            metric: m,
            radius: if top > 0.0 { MIN_RADIUS + (MAX_RADIUS - MIN_RADIUS) * m / top } else { MIN_RADIUS },
        })
        .collect();
    let edges = graph
        .edges()
        .map(|e| ViewerEdge {
            source: e.source.0,
            target: e.target.0,
            relation: e.relation.clone(),
            multiplicity: e.multiplicity,
        })
        .collect();
    ViewerData { title: options.title.clone(), sizing: options.sizing, seed: options.seed, nodes, edges }
}

fn escape_html(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn html_string(graph: &KnowledgeGraph, options: &HtmlOptions) -> String {
    let data = viewer_data(graph, options);
    // keep the payload from closing its own script element
    let json = serde_json::to_string(&data).expect("viewer data serializes").replace("</", "<\\/");
    TEMPLATE.replace("{{TITLE}}", &escape_html(&options.title)).replace("{{DATA}}", &json)
}

pub fn export_html(graph: &KnowledgeGraph, path: &Path, options: &HtmlOptions) -> Result<(), FormatError> {
    write_text(path, &html_string(graph, options))
}

/// Extracts the embedded payload from a file written by [`html_string`].
pub fn embedded_data(html: &str) -> Option<ViewerData> {
    let start = html.find(DATA_OPEN)? + DATA_OPEN.len();
    let end = start + html[start..].find("</script>")?;
    serde_json::from_str(&html[start..end].replace("<\\/", "</")).ok()
}

const DATA_OPEN: &str = r#"<script type="application/json" id="graph-data">"#;

const TEMPLATE: &str = r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{{TITLE}}</title>
<style>
body { margin: 0; font-family: sans-serif; background: #fafafa; }
#info { position: fixed; top: 8px; left: 8px; padding: 4px 8px; background: #fffe; border: 1px solid #ccc; font-size: 13px; }
svg { width: 100vw; height: 100vh; }
line { stroke: #999; stroke-opacity: 0.6; }
circle { stroke: #fff; stroke-width: 1; }
text { font-size: 10px; pointer-events: none; }
</style>
</head>
<body>
<div id="info">{{TITLE}}</div>
<svg id="canvas"></svg>
<script type="application/json" id="graph-data">{{DATA}}</script>
<script>
(function () {
  var data = JSON.parse(document.getElementById("graph-data").textContent);
  var seed = data.seed >>> 0;
  function rand() {
    seed = (seed + 0x6D2B79F5) >>> 0;
    var t = seed;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  }
  var W = 1000, H = 1000, n = data.nodes.length;
  var index = {};
  data.nodes.forEach(function (d, i) { index[d.id] = i; d.x = rand() * W; d.y = rand() * H; });
  var k = Math.sqrt((W * H) / Math.max(n, 1)), temp = W / 10;
  for (var it = 0; it < 300; it++) {
    var dx = new Float64Array(n), dy = new Float64Array(n);
    for (var i = 0; i < n; i++) for (var j = i + 1; j < n; j++) {
      var a = data.nodes[i], b = data.nodes[j];
      var x = a.x - b.x, y = a.y - b.y, dist = Math.max(Math.hypot(x, y), 0.01);
      var f = (k * k) / dist;
      dx[i] += x / dist * f; dy[i] += y / dist * f; dx[j] -= x / dist * f; dy[j] -= y / dist * f;
    }
    data.edges.forEach(function (e) {
      var i = index[e.source], j = index[e.target], a = data.nodes[i], b = data.nodes[j];
      var x = a.x - b.x, y = a.y - b.y, dist = Math.max(Math.hypot(x, y), 0.01);
      var f = (dist * dist) / k;
      dx[i] -= x / dist * f; dy[i] -= y / dist * f; dx[j] += x / dist * f; dy[j] += y / dist * f;
    });
    data.nodes.forEach(function (d, i) {
      var len = Math.max(Math.hypot(dx[i], dy[i]), 0.01), step = Math.min(len, temp);
      d.x = Math.min(W, Math.max(0, d.x + dx[i] / len * step));
      d.y = Math.min(H, Math.max(0, d.y + dy[i] / len * step));
    });
    temp *= 0.98;
  }
  var ns = "http://www.w3.org/2000/svg", svg = document.getElementById("canvas");
  svg.setAttribute("viewBox", "-40 -40 " + (W + 80) + " " + (H + 80));
  function el(tag, attrs, parent) {
    var node = document.createElementNS(ns, tag);
    for (var key in attrs) node.setAttribute(key, attrs[key]);
    parent.appendChild(node);
    return node;
  }
  data.edges.forEach(function (e) {
    var a = data.nodes[index[e.source]], b = data.nodes[index[e.target]];
    var line = el("line", { x1: a.x, y1: a.y, x2: b.x, y2: b.y, "stroke-width": Math.min(1 + Math.log(e.multiplicity), 6) }, svg);
    el("title", {}, line).textContent = a.label + " - " + b.label + ": " + e.relation;
  });
  data.nodes.forEach(function (d) {
    var color = "hsl(" + ((d.community * 137.508) % 360) + ",65%,50%)";
    var c = el("circle", { cx: d.x, cy: d.y, r: d.radius, fill: color }, svg);
    el("title", {}, c).textContent = d.label + " (community " + d.community + ", " + data.sizing + " " + d.metric.toPrecision(4) + ")";
    el("text", { x: d.x + d.radius + 2, y: d.y + 3 }, svg).textContent = d.label;
  });
  document.getElementById("info").textContent += " | " + n + " nodes | " + data.edges.length + " edges";
})();
</script>
</body>
</html>
"#;
