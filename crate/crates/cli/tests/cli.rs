use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsac_core::synth::{build_catalog, case_study};
use fsac_core::codec::serialize_canonical;
use fsac_core::codec::vocab::string_to_ids;

fn fsac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsac")).args(args).output().expect("spawn fsac")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, n: usize, extra: &[&str]) -> Output {
    let mut args = extra.to_vec();
    let n = n.to_string();
    args.extend(["gen", "--n", &n, "--seed", "3", "--out", dir.to_str().unwrap()]);
    fsac(&args)
}

const TINY: [&str; 8] = ["--d-model", "16", "--layers", "1", "--max-steps", "10", "--eval-every", "5"];

fn tiny_model(data: &Path, out: &Path) {
    let mut args = vec!["--set", "train.val_limit=20", "train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(TINY);
    let o = fsac(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(gen(&a, 300, &["--threads", "1"]).status.success());
    assert!(gen(&b, 300, &["--threads", "3"]).status.success());
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gen(dir.path(), 0, &[]).status.code(), Some(2));
    let o = gen(dir.path(), 10, &["--set", "gen.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    assert_eq!(fsac(&["train"]).status.code(), Some(2));
}

#[test]
fn corrupted_corpus_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gen(dir.path(), 100, &[]).status.success());
    let path = dir.path().join("train.jsonl");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    let at = lines.len() / 2;
    let half = lines[at].len() / 2;
    lines[at].truncate(half);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = dir.path().join("run");
    let o = fsac(&["train", "--data", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap(), "--max-steps", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("train.jsonl:{}", at + 1)), "{err}");
}

#[test]
fn train_correct_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    assert!(gen(&data, 200, &[]).status.success());
    tiny_model(&data, &run);
    let model = run.join("model.fack");
    assert!(fsac_model::load_checkpoint(&model).is_ok());
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let (_, broken) = case_study(&build_catalog());
    let input = serialize_canonical(&broken).unwrap();
    let m = model.to_str().unwrap();
    let beam1 = fsac(&["correct", "--model", m, "--input", &input, "--beam", "1", "--json"]);
    assert!(beam1.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&beam1.stdout).unwrap();
    let p = fsac_model::load_checkpoint(&model).unwrap().0;
    let src = string_to_ids(&input);
    let greedy = fsac_model::greedy_decode(&p, &src, fsac_model::max_decode_len(p.config.max_seq_len, src.len())).unwrap();
    assert_eq!(doc["suggestions"][0]["text"], fsac_model::ids_to_string(&greedy.tokens));
    assert_eq!(doc["input"], input.as_str());

    let bad = fsac(&["correct", "--model", m, "--input", "(raw)(hex"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("byte"));

    let d = data.to_str().unwrap();
    let report = |split: &str, name: &str| {
        let out = dir.path().join(name);
        let o = fsac(&["eval", "--model", m, "--data", d, "--split", split, "--beam", "2", "--limit", "6", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
        v
    };
    let (val, test, test2) = (report("val", "v.json"), report("test", "t.json"), report("test", "t2.json"));
    assert_eq!(val["split"], "val");
    assert_eq!(test["split"], "test");
    assert_eq!(test, test2);
}

#[test]
fn validate_reports_parse_and_lint_findings() {
    let (good, broken) = case_study(&build_catalog());
    let good = serialize_canonical(&good).unwrap();
    let o = fsac(&["validate", "--input", &good]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("ok:"));

    let o = fsac(&["validate", "--input", &serialize_canonical(&broken).unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("lint:"), "{}", stdout(&o));

    let o = fsac(&["validate", "--input", "(raw)(r)$(prod)"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("parse error:") && stdout(&o).contains("byte 8"), "{}", stdout(&o));
}

#[test]
fn export_dot_shapes_and_styles() {
    let o = fsac(&["export-dot", "--input", "(raw)(r)(prod)"]);
    assert!(o.status.success());
    let dot = stdout(&o);
    assert_eq!(dot.matches("shape=").count(), 3);
    assert_eq!(dot.matches("style=solid").count(), 2);
    assert!(!dot.contains("dashed"));

    let (good, _) = case_study(&build_catalog());
    let s = serialize_canonical(&good).unwrap();
    let dot = stdout(&fsac(&["export-dot", "--input", &s]));
    assert_eq!(dot, stdout(&fsac(&["export-dot", "--input", &s])));
    let signals = good.edges().iter().filter(|e| e.kind == fsac_core::EdgeKind::Signal).count();
    assert_eq!(dot.matches("style=dashed").count(), signals);
    assert_eq!(dot.matches("style=solid").count(), good.edge_count() - signals);
    // Every dashed edge touches an instrument node (drawn as a circle).
    let circles: Vec<String> = dot
        .lines()
        .filter(|l| l.contains("shape=circle"))
        .map(|l| l.trim().split(' ').next().unwrap().to_string())
        .collect();
    for l in dot.lines().filter(|l| l.contains("dashed")) {
        let mut ends = l.trim().split(" -> ");
        let (a, b) = (ends.next().unwrap(), ends.next().unwrap().split(' ').next().unwrap());
        assert!(circles.iter().any(|c| c == a || c == b), "{l}");
    }
}

#[test]
fn vocab_lists_every_token() {
    let o = fsac(&["vocab"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 53);
}
