//! Well-formedness rulebook: what a "correct" flowsheet looks like.
//!
//! Structural validity only guarantees that a graph can be serialized. The
//! linter encodes the engineering rules the corpus generator builds targets
//! from: degree rules per unit kind, complete control loops and stream
//! reachability.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::graph::{Edge, EdgeKind, EdgeTag, FlowsheetGraph, NodeId, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LintRule {
    StreamDegree,
    ColumnOutlets,
    PassDegree,
    InstrumentMeasurement,
    InstrumentActuation,
    NotFed,
    DeadEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintFinding {
    pub node: NodeId,
    pub rule: LintRule,
    pub message: String,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.rule, self.node, self.message)
    }
}

fn finding(node: NodeId, rule: LintRule, message: String) -> LintFinding {
    LintFinding { node, rule, message }
}

/// Runs the rulebook. Expects a structurally valid graph; returns an empty
/// list for well-formed flowsheets.
pub fn lint_wellformed(g: &FlowsheetGraph) -> Vec<LintFinding> {
    let mut out = Vec::new();
    for n in g.nodes() {
        let s_in: Vec<_> = g.stream_in(n.id).map(|(_, e)| e).collect();
        let s_out: Vec<_> = g.stream_out(n.id).map(|(_, e)| e).collect();
        let label = n.kind.mnemonic();
        match n.kind {
            UnitKind::Pump | UnitKind::Compressor | UnitKind::Valve | UnitKind::Storage => {
                if s_in.len() != 1 || s_out.len() != 1 {
                    out.push(finding(
                        n.id,
                        LintRule::StreamDegree,
                        format!("{label} needs 1 inlet and 1 outlet, has {} and {}", s_in.len(), s_out.len()),
                    ));
                }
            }
            UnitKind::Mixer => {
                if s_in.len() < 2 || s_out.len() != 1 {
                    out.push(finding(
                        n.id,
                        LintRule::StreamDegree,
                        format!("mixer needs >=2 inlets and 1 outlet, has {} and {}", s_in.len(), s_out.len()),
                    ));
                }
            }
            UnitKind::Splitter => {
                if s_in.len() != 1 || s_out.len() < 2 {
                    out.push(finding(
                        n.id,
                        LintRule::StreamDegree,
                        format!("splitter needs 1 inlet and >=2 outlets, has {} and {}", s_in.len(), s_out.len()),
                    ));
                }
            }
            UnitKind::Column => {
                let tags: BTreeSet<Option<EdgeTag>> = s_out.iter().map(|e| e.tag).collect();
                let ok_out = s_out.len() == 2
                    && tags.contains(&Some(EdgeTag::Tout))
                    && tags.contains(&Some(EdgeTag::Bout));
                if s_in.len() != 1 || !ok_out {
                    out.push(finding(
                        n.id,
                        LintRule::ColumnOutlets,
                        format!(
                            "column needs 1 feed and distinct tout/bout outlets, has {} feeds and {} outlets",
                            s_in.len(),
                            s_out.len()
                        ),
                    ));
                }
            }
            UnitKind::HeatExchanger => {
                let passes: BTreeSet<Option<u8>> = s_in
                    .iter()
                    .chain(s_out.iter())
                    .map(|e| e.tag.and_then(EdgeTag::pass_number))
                    .collect();
                let multi = passes.iter().flatten().count() >= 2;
                let pass_of = |e: &&Edge| if multi { e.tag.and_then(EdgeTag::pass_number) } else { None };
                let passes: BTreeSet<Option<u8>> = s_in.iter().chain(s_out.iter()).map(pass_of).collect();
                for pass in passes {
                    let i = s_in.iter().filter(|e| pass_of(e) == pass).count();
                    let o = s_out.iter().filter(|e| pass_of(e) == pass).count();
                    if i != 1 || o != 1 {
                        let name = pass.map_or("untagged".to_string(), |p| format!("p{p}"));
                        out.push(finding(
                            n.id,
                            LintRule::PassDegree,
                            format!("heat exchanger pass {name} has {i} inlets and {o} outlets"),
                        ));
                    }
                }
                if s_in.is_empty() && s_out.is_empty() {
                    out.push(finding(n.id, LintRule::PassDegree, "heat exchanger has no streams".into()));
                }
            }
            UnitKind::Instrument => {
                let sig_in = g.in_edges(n.id).filter(|(_, e)| e.kind == EdgeKind::Signal).count();
                let sig_out: Vec<_> = g.out_edges(n.id).filter(|(_, e)| e.kind == EdgeKind::Signal).collect();
                if sig_in != 1 {
                    out.push(finding(
                        n.id,
                        LintRule::InstrumentMeasurement,
                        format!("instrument needs exactly 1 measurement input, has {sig_in}"),
                    ));
                }
                let targets_ok = sig_out.iter().all(|(_, e)| {
                    matches!(g.kind(e.dst), Some(UnitKind::Valve) | Some(UnitKind::Instrument))
                });
                if sig_out.len() != 1 || !targets_ok {
                    out.push(finding(
                        n.id,
                        LintRule::InstrumentActuation,
                        format!(
                            "instrument needs exactly 1 actuation output to a valve or instrument, has {}",
                            sig_out.len()
                        ),
                    ));
                }
            }
            UnitKind::RawFeed | UnitKind::Product | UnitKind::Reactor => {}
        }
    }

    let fed = stream_closure(g, g.nodes().iter().filter(|n| n.kind == UnitKind::RawFeed).map(|n| n.id), true);
    let drained =
        stream_closure(g, g.nodes().iter().filter(|n| n.kind == UnitKind::Product).map(|n| n.id), false);
    for n in g.nodes().iter().filter(|n| n.kind != UnitKind::Instrument) {
        if !fed.contains(&n.id) {
            out.push(finding(n.id, LintRule::NotFed, format!("{} is not reachable from any raw feed", n.kind)));
        }
        if !drained.contains(&n.id) {
            out.push(finding(n.id, LintRule::DeadEnd, format!("{} does not reach any product", n.kind)));
        }
    }
    out
}

fn stream_closure(g: &FlowsheetGraph, start: impl Iterator<Item = NodeId>, forward: bool) -> BTreeSet<NodeId> {
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut queue: VecDeque<NodeId> = start.collect();
    seen.extend(queue.iter().copied());
    while let Some(u) = queue.pop_front() {
        let next: Vec<NodeId> = if forward {
            g.stream_out(u).map(|(_, e)| e.dst).collect()
        } else {
            g.stream_in(u).map(|(_, e)| e.src).collect()
        };
        for w in next {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}
