use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn kgraph(run_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgraph"))
        .arg("--run-dir")
        .arg(run_dir)
        .arg("--json")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn chunk_replies(triples: Value) -> Vec<String> {
    ["summary", "- fact", "title", "draft", "refined"].map(String::from).into_iter().chain([triples.to_string()]).collect()
}

fn ingest(dir: &Path) -> Value {
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    fs::write(corpus.join("a.txt"), "Silk is a protein fiber spun by spiders.").unwrap();
    fs::write(corpus.join("b.md"), "# Steel\n\nSteel is an alloy used in cables.").unwrap();
    let mut script = chunk_replies(json!([
        {"node_1": "silk", "node_2": "protein fiber", "edge": "is a"},
        {"node_1": "protein fiber", "node_2": "spider", "edge": "spun by"},
    ]));
    script.extend(chunk_replies(json!([
        {"node_1": "steel", "node_2": "alloy", "edge": "is an"},
        {"node_1": "alloy", "node_2": "cable", "edge": "used in"},
        {"node_1": "cable", "node_2": "protein fiber", "edge": "competes with"},
    ])));
    let script_path = dir.join("script.json");
    fs::write(&script_path, serde_json::to_string(&script).unwrap()).unwrap();
    ok(&kgraph(&dir.join("run"), &["ingest", corpus.to_str().unwrap(), "--mock-script", script_path.to_str().unwrap()]))
}

#[test]
fn ingest_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = ingest(tmp.path());
    assert_eq!(summary["documents"], 2);
    assert_eq!(summary["nodes"], 6);
    assert_eq!(summary["edges"], 5);
    let run = tmp.path().join("run");
    let graph = run.join("graphs/corpus.graphml");
    assert!(graph.exists());
    for sub in ["chunks", "contexts", "extractions", "reports"] {
        assert!(run.join(sub).is_dir(), "{sub}");
    }

    let stats = ok(&kgraph(&run, &["stats", graph.to_str().unwrap()]));
    assert_eq!(stats["nodes"], 6);
    assert!((stats["avg_degree"].as_f64().unwrap() - 10.0 / 6.0).abs() < 1e-12);
    assert!(run.join("reports/degree_histogram.csv").exists());

    let path = ok(&kgraph(&run, &["path", graph.to_str().unwrap(), "silk", "cable"]));
    let context = fs::read_to_string(run.join("reports/context.md")).unwrap();
    assert!(context.contains("### Primary combination (path from 0 to 0):"), "{context}");
    assert!(path.get("parameters").is_some());

    let html = run.join("view.html");
    ok(&kgraph(&run, &["export", graph.to_str().unwrap(), "--format", "html", "--out", html.to_str().unwrap()]));
    assert!(fs::read_to_string(html).unwrap().contains("graph-data"));

    let history: Value = serde_json::from_str(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(history["commands"].as_array().unwrap().len(), 4);
}

#[test]
fn errors_are_reported_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kgraph(tmp.path(), &["stats", "missing.graphml"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("missing.graphml"));

    let out = kgraph(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(serde_json::from_slice::<Value>(&out.stderr).is_ok());
}

#[test]
fn duet_saves_partial_transcript_when_the_script_runs_dry() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("duet.json");
    fs::write(&script, r#"["seed answer", "follow-up question"]"#).unwrap();
    let run = tmp.path().join("run");
    let out = kgraph(&run, &["duet", "--question", "why silk?", "--turns", "3", "--mock-script", script.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let saved = fs::read_to_string(run.join("transcripts/duet.json")).unwrap();
    assert!(saved.contains("seed answer"));
}
