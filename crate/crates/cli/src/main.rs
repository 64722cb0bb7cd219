use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use kgraph_cli::{run, Cli};
use serde_json::{json, Value};

fn render(value: &Value, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter().filter(|(k, _)| *k != "parameters") {
                match v {
                    Value::Object(_) | Value::Array(_) if !v.as_array().is_some_and(|a| a.iter().all(|x| !x.is_object())) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render(v, indent + 2, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", scalar(v))),
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                out.push_str(&format!("{pad}-\n"));
                render(item, indent + 2, out);
            }
        }
        other => out.push_str(&format!("{pad}{}\n", scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn main() -> ExitCode {
    let json_mode = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if json_mode && e.use_stderr() => {
            eprintln!("{}", json!({ "error": e.kind().to_string(), "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(summary) => {
            let mut text = String::new();
            if cli.json {
                text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
            } else {
                render(&summary, 0, &mut text);
            }
            // a closed pipe (e.g. `| head`) is not a failure of the command
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                eprintln!("{}", json!({ "error": format!("{e:#}"), "command": cli.command.name(), "causes": chain }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
