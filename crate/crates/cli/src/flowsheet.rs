//! Single-flowsheet subcommands: correct, validate, export-dot, vocab.

use std::fmt::Write as _;
use std::io::Read;

use anyhow::{bail, Context, Result};
use fsac_core::codec::vocab::{string_to_ids, vocabulary};
use fsac_core::codec::{parse, serialize_canonical};
use fsac_core::eval::string_diff;
use fsac_core::graph::{EdgeKind, FlowsheetGraph};
use fsac_core::lint::lint_wellformed;
use fsac_model::{beam_decode, ids_to_string, load_checkpoint, max_decode_len};
use serde_json::json;

use crate::config::RunConfig;
use crate::{CorrectArgs, DotArgs, InputArgs, Reported, UsageError};

fn read_input(a: &InputArgs) -> Result<String> {
    let s = match &a.input {
        Some(s) => s.clone(),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading standard input")?;
            s
        }
    };
    let s = s.trim().to_string();
    if s.is_empty() {
        bail!(UsageError("no input flowsheet (use --input or standard input)".into()));
    }
    Ok(s)
}

fn parse_input(s: &str) -> Result<FlowsheetGraph> {
    parse(s).with_context(|| format!("cannot parse input {s:?}"))
}

/// "valid", "lint:N" (parses but has N findings) or "invalid".
pub fn validity(s: &str) -> String {
    match parse(s) {
        Ok(g) => match lint_wellformed(&g).len() {
            0 => "valid".into(),
            n => format!("lint:{n}"),
        },
        Err(_) => "invalid".into(),
    }
}

pub fn correct(cfg: RunConfig, a: CorrectArgs) -> Result<()> {
    let input = read_input(&a.input)?;
    // Parse before touching the model so bad input fails fast.
    let graph = parse_input(&input)?;
    let canonical = serialize_canonical(&graph)?;
    let beam = a.beam.unwrap_or(cfg.decode.beam);
    if beam == 0 {
        bail!(UsageError("--beam must be positive".into()));
    }
    let top_k = match a.top_k.unwrap_or(cfg.decode.top_k) {
        0 => beam,
        k => k.min(beam),
    };
    let (p, _) = load_checkpoint(&a.model)?;
    let src = string_to_ids(&canonical);
    let hyps = beam_decode(&p, &src, beam, max_decode_len(p.config.max_seq_len, src.len()))?;
    let shown: Vec<_> = hyps
        .iter()
        .take(top_k)
        .map(|h| {
            let text = ids_to_string(&h.tokens);
            json!({ "text": text, "score": h.score, "validity": validity(&text), "unchanged": text == canonical })
        })
        .collect();
    let diff = shown.first().and_then(|h| string_diff(&canonical, h["text"].as_str().unwrap_or_default()).ok());
    if a.json {
        let doc = json!({ "input": canonical, "suggestions": shown, "diff": diff });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    println!("input    {canonical}");
    for (i, h) in shown.iter().enumerate() {
        println!("{:>2}. {:>9.4}  {:<8} {}", i + 1, h["score"].as_f64().unwrap_or(f64::NAN), h["validity"].as_str().unwrap_or(""), h["text"].as_str().unwrap_or(""));
    }
    match diff {
        Some(d) => println!("diff {}", serde_json::to_string(&d)?),
        None => println!("diff null"),
    }
    Ok(())
}

pub fn validate(a: InputArgs) -> Result<()> {
    let input = read_input(&a)?;
    let g = match parse(&input) {
        Ok(g) => g,
        Err(e) => {
            println!("parse error: {e}");
            bail!(Reported(e.to_string()));
        }
    };
    let violations = g.validate_structure();
    let findings = lint_wellformed(&g);
    for v in &violations {
        println!("structure: {v}");
    }
    for f in &findings {
        println!("lint: {f}");
    }
    if violations.is_empty() && findings.is_empty() {
        println!("ok: {} nodes, {} edges", g.node_count(), g.edge_count());
        Ok(())
    } else {
        bail!(Reported(format!("{} findings", violations.len() + findings.len())))
    }
}

/// Graphviz rendering in canonical node order: stream edges solid, signal
/// edges dashed, tags as edge labels.
pub fn to_dot(g: &FlowsheetGraph) -> Result<String> {
    let g = parse(&serialize_canonical(g)?)?;
    let index: std::collections::BTreeMap<_, _> = g.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut s = String::from("digraph flowsheet {\n  rankdir=LR;\n");
    for (i, n) in g.nodes().iter().enumerate() {
        let shape = if n.function.is_some() { "circle" } else { "box" };
        writeln!(s, "  n{i} [label=\"{}\", shape={shape}];", n.label()).expect("string write");
    }
    for e in g.edges() {
        let mut attrs = vec![match e.kind {
            EdgeKind::Stream => "style=solid".to_string(),
            EdgeKind::Signal => "style=dashed".to_string(),
        }];
        if let Some(t) = e.tag {
            attrs.push(format!("label=\"{t}\""));
        }
        writeln!(s, "  n{} -> n{} [{}];", index[&e.src], index[&e.dst], attrs.join(", ")).expect("string write");
    }
    s.push_str("}\n");
    Ok(s)
}

pub fn export_dot(a: DotArgs) -> Result<()> {
    let input = read_input(&a.input)?;
    let dot = to_dot(&parse_input(&input)?)?;
    match a.out {
        Some(path) => std::fs::write(&path, dot).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}

pub fn vocab() -> Result<()> {
    for e in vocabulary() {
        println!("{:>2} {}", e.id, e.form);
    }
    Ok(())
}
