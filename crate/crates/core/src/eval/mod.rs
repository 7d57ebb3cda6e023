//! Scoring of ranked corrections: exact-match accuracy, subset breakdowns and
//! a failure taxonomy for top-1 misses.

pub mod diff;
pub mod ged;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{parse, serialize_canonical};
use crate::graph::{FlowsheetGraph, NodeLabel};
pub use diff::{graph_diff, string_diff, DiffEdge, DiffNode, GraphDiff};
pub use ged::{edit_distance, edit_distance_upper_bound, EXACT_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub source: String,
    pub target: String,
    /// Best first.
    pub hypotheses: Vec<Hypothesis>,
}

impl PredictionRecord {
    pub fn new(source: impl Into<String>, target: impl Into<String>, hypotheses: &[&str]) -> Self {
        let n = hypotheses.len() as f64;
        PredictionRecord {
            source: source.into(),
            target: target.into(),
            hypotheses: hypotheses
                .iter()
                .enumerate()
                .map(|(i, h)| Hypothesis { text: h.to_string(), score: -(i as f64) / n.max(1.0) })
                .collect(),
        }
    }

    pub fn is_erroneous(&self) -> bool {
        self.source != self.target
    }

    pub fn top1(&self) -> Option<&str> {
        self.hypotheses.first().map(|h| h.text.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no records to evaluate")]
    Empty,
    #[error("record {0} has no hypotheses")]
    NoHypotheses(usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("top-1 hypothesis matches the target; nothing to classify")]
    Matched,
}

fn canonical_graph(s: &str) -> Option<(FlowsheetGraph, String)> {
    let g = parse(s).ok()?;
    let c = serialize_canonical(&g).ok()?;
    Some((g, c))
}

/// Graph-level exact match against a canonical target.
pub fn matches(hypothesis: &str, target: &str) -> bool {
    hypothesis == target || canonical_graph(hypothesis).is_some_and(|(_, c)| c == target)
}

fn hit_within(r: &PredictionRecord, k: usize) -> bool {
    r.hypotheses.iter().take(k).any(|h| matches(&h.text, &r.target))
}

pub fn topk_accuracy(records: &[PredictionRecord], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    check(records)?;
    let hits = records.par_iter().filter(|r| hit_within(r, k)).count();
    Ok(hits as f64 / records.len() as f64)
}

fn check(records: &[PredictionRecord]) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    match records.iter().position(|r| r.hypotheses.is_empty()) {
        Some(i) => Err(EvalError::NoHypotheses(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureClass {
    Invalid,
    Uncorrected,
    PartialCorrection,
    NewErrors,
    Other,
}

type EdgeSignature = (NodeLabel, NodeLabel, crate::graph::EdgeKind, Option<crate::graph::EdgeTag>);

fn signature(g: &FlowsheetGraph) -> (HashMap<NodeLabel, usize>, HashMap<EdgeSignature, usize>) {
    let mut nodes = HashMap::new();
    for n in g.nodes() {
        *nodes.entry(n.label()).or_default() += 1;
    }
    let label = |id| g.node(id).expect("edge endpoints exist").label();
    let mut edges = HashMap::new();
    for e in g.edges() {
        let tag = e.tag.filter(|t| !t.is_pass());
        *edges.entry((label(e.src), label(e.dst), e.kind, tag)).or_default() += 1;
    }
    (nodes, edges)
}

/// True if `h` has more copies of some node label than both `s` and `t`, or
/// an edge label found in neither. Edges are compared as sets: repairing a
/// retyped unit can duplicate an edge label that both graphs already have.
fn introduces_new(h: &FlowsheetGraph, s: &FlowsheetGraph, t: &FlowsheetGraph) -> bool {
    let (hn, he) = signature(h);
    let (sn, se) = signature(s);
    let (tn, te) = signature(t);
    let count = |m: &HashMap<NodeLabel, usize>, k| m.get(k).copied().unwrap_or(0);
    hn.iter().any(|(k, &c)| c > count(&sn, k).max(count(&tn, k)))
        || he.keys().any(|k| !se.contains_key(k) && !te.contains_key(k))
}

/// Failure mode of a record whose top-1 hypothesis missed. Rules apply in
/// order: Invalid, Other for correct sources, Uncorrected, NewErrors,
/// PartialCorrection, Other.
pub fn classify_failure(r: &PredictionRecord) -> Result<FailureClass, EvalError> {
    let top = r.top1().ok_or(EvalError::NoHypotheses(0))?;
    if matches(top, &r.target) {
        return Err(EvalError::Matched);
    }
    let Some((h, hc)) = canonical_graph(top) else {
        return Ok(FailureClass::Invalid);
    };
    let (Some((s, sc)), Some((t, tc))) = (canonical_graph(&r.source), canonical_graph(&r.target)) else {
        return Ok(FailureClass::Other);
    };
    if sc == tc {
        return Ok(FailureClass::Other);
    }
    if hc == sc {
        return Ok(FailureClass::Uncorrected);
    }
    let (dh, ds) = (edit_distance(&h, &t), edit_distance(&s, &t));
    Ok(if introduces_new(&h, &s, &t) || dh > ds {
        FailureClass::NewErrors
    } else if dh < ds {
        FailureClass::PartialCorrection
    } else {
        FailureClass::Other
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
    pub top1_string: f64,
    /// Correct sources only: top-1 equals the input string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_preservation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Subsets {
    pub erroneous: SubsetMetrics,
    pub correct: SubsetMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub invalid: usize,
    pub uncorrected: usize,
    pub partial: usize,
    pub new_errors: usize,
    pub other: usize,
}

impl FailureHistogram {
    pub fn add(&mut self, c: FailureClass) {
        match c {
            FailureClass::Invalid => self.invalid += 1,
            FailureClass::Uncorrected => self.uncorrected += 1,
            FailureClass::PartialCorrection => self.partial += 1,
            FailureClass::NewErrors => self.new_errors += 1,
            FailureClass::Other => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.invalid + self.uncorrected + self.partial + self.new_errors + self.other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
    pub top1_string: f64,
    pub subsets: Subsets,
    pub failures: FailureHistogram,
    /// Caller-supplied extras, e.g. the case-study regression result.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

struct Scored {
    erroneous: bool,
    top1: bool,
    top5: bool,
    top1_string: bool,
    identity: bool,
    failure: Option<FailureClass>,
}

fn score(r: &PredictionRecord) -> Scored {
    let top = r.top1().unwrap_or_default();
    let top1 = matches(top, &r.target);
    Scored {
        erroneous: r.is_erroneous(),
        top1,
        top5: top1 || hit_within(r, 5),
        top1_string: top == r.target,
        identity: top == r.source,
        failure: if top1 { None } else { classify_failure(r).ok() },
    }
}

fn ratio(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

fn subset(scored: &[&Scored], identity: bool) -> SubsetMetrics {
    let n = scored.len();
    let count = |f: fn(&Scored) -> bool| scored.iter().filter(|s| f(s)).count();
    SubsetMetrics {
        n,
        top1: ratio(count(|s| s.top1), n),
        top5: ratio(count(|s| s.top5), n),
        top1_string: ratio(count(|s| s.top1_string), n),
        identity_preservation: identity.then(|| ratio(count(|s| s.identity), n)),
    }
}

/// Scores records in parallel and reduces in input order.
pub fn report(records: &[PredictionRecord]) -> Result<EvalReport, EvalError> {
    check(records)?;
    let scored: Vec<Scored> = records.par_iter().map(score).collect();
    let all: Vec<&Scored> = scored.iter().collect();
    let total = subset(&all, false);
    let bad: Vec<&Scored> = scored.iter().filter(|s| s.erroneous).collect();
    let good: Vec<&Scored> = scored.iter().filter(|s| !s.erroneous).collect();
    let mut failures = FailureHistogram::default();
    for s in &scored {
        if let Some(c) = s.failure {
            failures.add(c);
        }
    }
    Ok(EvalReport {
        n: total.n,
        top1: total.top1,
        top5: total.top5,
        top1_string: total.top1_string,
        subsets: Subsets { erroneous: subset(&bad, false), correct: subset(&good, true) },
        failures,
        extra: BTreeMap::new(),
    })
}
