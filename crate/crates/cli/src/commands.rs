//! Corpus, training and evaluation subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fsac_core::eval::{report, Hypothesis, PredictionRecord};
use fsac_core::synth::{generate_corpus, read_split, write_corpus, FlowsheetPair};
use fsac_model::*;
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::{EvalArgs, GenArgs, GridArgs, Reported, TrainArgs, UsageError};

pub use crate::flowsheet::{correct, export_dot, validate, vocab};

pub const CHECKPOINT: &str = "model.fack";
pub const TRAIN_LOG: &str = "train_log.jsonl";

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("serializable") + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(mut cfg: RunConfig, a: GenArgs) -> Result<()> {
    if let Some(n) = a.n {
        cfg.gen.n_pairs = n;
    }
    if let Some(s) = a.seed {
        cfg.gen.seed = s;
    }
    cfg.validate()?;
    let corpus = generate_corpus(&cfg.gen)?;
    let mut manifest = corpus.manifest(&cfg.gen);
    manifest.run_config = Some(cfg.echo());
    write_corpus(&corpus, &manifest, &a.out)?;
    for (name, s) in [("total", &manifest.total), ("train", &manifest.train), ("val", &manifest.val), ("test", &manifest.test)] {
        println!("{name:<6} n={:<8} erroneous={:<8} fraction={:.4}", s.pairs, s.erroneous, s.erroneous_fraction);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn load_split(dir: &Path, name: &str, limit: Option<usize>) -> Result<Vec<FlowsheetPair>> {
    let path = dir.join(format!("{name}.jsonl"));
    let mut pairs = read_split(&path)?;
    if let Some(n) = limit {
        pairs.truncate(n);
    }
    if pairs.is_empty() {
        bail!("{}: no records", path.display());
    }
    Ok(pairs)
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    t.max_steps = a.max_steps.unwrap_or(t.max_steps);
    t.max_seconds = a.max_seconds.unwrap_or(t.max_seconds);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.batch_size = a.batch.unwrap_or(t.batch_size);
    t.seed = a.seed.unwrap_or(t.seed);
    t.eval_every = a.eval_every.unwrap_or(t.eval_every);
    let m = &mut cfg.model;
    if let Some(d) = a.d_model {
        m.d_model = d;
        m.d_ff = 4 * d;
    }
    m.n_layers = a.layers.unwrap_or(m.n_layers);
    cfg.validate()?;

    let train_pairs = load_split(&a.data, "train", a.limit)?;
    let val_pairs = load_split(&a.data, "val", None)?;
    let (tr, va) = (tokenize_pairs(&train_pairs), tokenize_pairs(&val_pairs));
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ckpt = a.out.join(CHECKPOINT);
    let log_path = a.out.join(TRAIN_LOG);
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;

    let init = Params::<f32>::init(&cfg.model, cfg.train.seed)?;
    println!("training {} parameters on {} pairs ({} validation)", init.len(), tr.len(), va.len());
    let mut io_error = None;
    let outcome = fsac_model::train(init, &tr, &va, &cfg.train, |c, p, improved| {
        let line = serde_json::to_string(c).expect("curve point serializes");
        println!("{line}");
        let mut res = writeln!(log, "{line}").and_then(|_| log.flush()).map_err(anyhow::Error::from);
        if improved && res.is_ok() {
            let state = TrainingState { step: c.step, best_val_loss: c.val_loss };
            res = save_checkpoint(p, &state, &ckpt).map_err(anyhow::Error::from);
        }
        if let Err(e) = res {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.context("writing training outputs"));
    }
    let state = TrainingState { step: outcome.best_step, best_val_loss: outcome.best_val_loss };
    save_checkpoint(&outcome.params, &state, &ckpt)?;
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "config": cfg.echo(),
            "data": a.data,
            "train_pairs": tr.len(),
            "val_pairs": va.len(),
            "params": outcome.params.len(),
            "steps": outcome.steps,
            "best_step": outcome.best_step,
            "best_val_loss": outcome.best_val_loss,
            "stop": outcome.stop,
            "seconds": outcome.seconds,
        }),
    )?;
    println!(
        "stopped ({:?}) after {} steps in {:.0} s; best val loss {:.4} at step {}; checkpoint {}",
        outcome.stop,
        outcome.steps,
        outcome.seconds,
        outcome.best_val_loss,
        outcome.best_step,
        ckpt.display()
    );
    if outcome.stop == StopReason::Diverged {
        println!("training diverged (non-finite loss)");
        bail!(Reported("diverged".into()));
    }
    Ok(())
}

pub fn grid(mut cfg: RunConfig, a: GridArgs) -> Result<()> {
    let mut space = GridSpace::default();
    if !a.d_model.is_empty() {
        space.d_model = a.d_model;
    }
    if !a.layers.is_empty() {
        space.n_layers = a.layers;
    }
    if !a.lr.is_empty() {
        space.learning_rate = a.lr;
    }
    if !a.batch.is_empty() {
        space.batch_size = a.batch;
    }
    cfg.train.max_steps = a.max_steps.unwrap_or(cfg.train.max_steps);
    cfg.train.max_seconds = a.max_seconds.unwrap_or(cfg.train.max_seconds);
    cfg.validate()?;
    let tr = tokenize_pairs(&load_split(&a.data, "train", a.limit)?);
    let va = tokenize_pairs(&load_split(&a.data, "val", None)?);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let n = space.cells().len();
    let mut done = 0;
    let results = grid_search(&space, &cfg.model, &cfg.train, &tr, &va, |r| {
        done += 1;
        println!("[{done}/{n}] {}", serde_json::to_string(r).expect("result serializes"));
    });
    let table = report_table(&results);
    print!("{table}");
    fs::write(a.out.join("grid.txt"), &table)?;
    write_json(&a.out.join("grid.json"), &json!({ "config": cfg.echo(), "space": space, "results": results }))
}

/// Beam-decodes every source; hypotheses best first.
pub fn predict(p: &Params<f32>, pairs: &[FlowsheetPair], beam: usize, top_k: usize) -> Result<Vec<PredictionRecord>> {
    pairs
        .par_iter()
        .map(|pair| {
            let src = fsac_core::codec::vocab::string_to_ids(&pair.source);
            let max_len = max_decode_len(p.config.max_seq_len, src.len());
            let hyps = beam_decode(p, &src, beam, max_len)?;
            Ok(PredictionRecord {
                source: pair.source.clone(),
                target: pair.target.clone(),
                hypotheses: hyps
                    .iter()
                    .take(top_k)
                    .map(|h| Hypothesis { text: ids_to_string(&h.tokens), score: h.score })
                    .collect(),
            })
        })
        .collect()
}

/// Corrects the broken case-study fixture (reactor without PC, exchanger
/// without TC) and records where the intended target lands.
fn case_study(p: &Params<f32>, beam: usize) -> Result<serde_json::Value> {
    let (target, broken) = fsac_core::synth::case_study(&fsac_core::synth::build_catalog());
    let (t, s) = (fsac_core::codec::serialize_canonical(&target)?, fsac_core::codec::serialize_canonical(&broken)?);
    let pair = FlowsheetPair { source: s.clone(), target: t.clone(), errors: Vec::new(), patterns: Vec::new(), idx: 0 };
    let rec = predict(p, std::slice::from_ref(&pair), beam.max(5), beam.max(5))?.remove(0);
    let rank = rec.hypotheses.iter().position(|h| fsac_core::eval::matches(&h.text, &t)).map(|i| i + 1);
    Ok(json!({
        "source": s,
        "target": t,
        "hypotheses": rec.hypotheses,
        "rank": rank,
        "in_top5": rank.is_some_and(|r| r <= 5),
    }))
}

pub fn eval(cfg: RunConfig, a: EvalArgs) -> Result<()> {
    let beam = a.beam.unwrap_or(cfg.decode.beam);
    if beam == 0 {
        bail!(UsageError("--beam must be positive".into()));
    }
    let (p, state) = load_checkpoint(&a.model)?;
    let pairs = load_split(&a.data, &a.split, a.limit)?;
    let started = Instant::now();
    let records = predict(&p, &pairs, beam, beam)?;
    let mut rep = report(&records)?;
    rep.extra.insert("split".into(), json!(a.split));
    rep.extra.insert("beam".into(), json!(beam));
    rep.extra.insert("checkpoint".into(), json!(a.model));
    rep.extra.insert("checkpoint_step".into(), json!(state.step));
    rep.extra.insert("model".into(), serde_json::to_value(&p.config)?);
    rep.extra.insert("params".into(), json!(p.len()));
    rep.extra.insert("case_study".into(), case_study(&p, beam)?);
    let out = a.out.unwrap_or_else(|| a.data.join(format!("report_{}.json", a.split)));
    write_json(&out, &rep)?;
    let preds = out.with_extension("predictions.jsonl");
    let mut f = fs::File::create(&preds).with_context(|| format!("creating {}", preds.display()))?;
    for r in &records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    println!(
        "{} records ({} split, beam {beam}) in {:.0} s: top1 {:.4} top5 {:.4}",
        rep.n,
        a.split,
        started.elapsed().as_secs_f64(),
        rep.top1,
        rep.top5
    );
    for (name, s) in [("erroneous", &rep.subsets.erroneous), ("correct", &rep.subsets.correct)] {
        print!("  {name:<9} n={:<6} top1 {:.4} top5 {:.4}", s.n, s.top1, s.top5);
        if let Some(ip) = s.identity_preservation {
            print!(" identity {ip:.4}");
        }
        println!();
    }
    println!("  failures {}", serde_json::to_string(&rep.failures)?);
    println!("  case study in top-5: {}", rep.extra["case_study"]["in_top5"]);
    println!("report {}", out.display());
    Ok(())
}
