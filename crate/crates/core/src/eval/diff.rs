//! Structural diff between two flowsheets for reporting suggestions.
//!
//! Both sides are re-parsed from their canonical strings so node indices are
//! emission positions in the canonical string. Nodes pair up by label and
//! edges by (source label, target label, edge class); among equal keys,
//! pairing follows emission order. What stays unpaired is reported.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::{canonicalize, parse, CodecError};
use crate::graph::{EdgeKind, FlowsheetGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiffNode {
    pub index: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiffEdge {
    pub src: usize,
    pub dst: usize,
    pub src_label: String,
    pub dst_label: String,
    /// "stream" or "signal".
    pub kind: String,
    /// "tout", "bout", "pass" or absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDiff {
    pub added_nodes: Vec<DiffNode>,
    pub removed_nodes: Vec<DiffNode>,
    pub added_edges: Vec<DiffEdge>,
    pub removed_edges: Vec<DiffEdge>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty() && self.removed_nodes.is_empty() && self.added_edges.is_empty() && self.removed_edges.is_empty()
    }
}

fn index_of(g: &FlowsheetGraph) -> BTreeMap<NodeId, usize> {
    g.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect()
}

fn nodes(g: &FlowsheetGraph) -> Vec<DiffNode> {
    g.nodes().iter().enumerate().map(|(index, n)| DiffNode { index, label: n.label().to_string() }).collect()
}

fn edges(g: &FlowsheetGraph) -> Vec<DiffEdge> {
    let idx = index_of(g);
    let label = |id: NodeId| g.node(id).expect("edge endpoint exists").label().to_string();
    let mut out: Vec<DiffEdge> = g
        .edges()
        .iter()
        .map(|e| DiffEdge {
            src: idx[&e.src],
            dst: idx[&e.dst],
            src_label: label(e.src),
            dst_label: label(e.dst),
            kind: match e.kind {
                EdgeKind::Stream => "stream".into(),
                EdgeKind::Signal => "signal".into(),
            },
            tag: e.tag.map(|t| if t.is_pass() { "pass".to_string() } else { t.as_str().to_string() }),
        })
        .collect();
    out.sort_by_key(|e| (e.src, e.dst));
    out
}

/// Items of `a` left over after pairing with `b` on `key`, in order.
fn unpaired<T: Clone, K: Ord>(a: &[T], b: &[T], key: impl Fn(&T) -> K) -> Vec<T> {
    let mut budget: BTreeMap<K, usize> = BTreeMap::new();
    for x in b {
        *budget.entry(key(x)).or_default() += 1;
    }
    a.iter()
        .filter(|x| match budget.get_mut(&key(x)) {
            Some(n) if *n > 0 => {
                *n -= 1;
                false
            }
            _ => true,
        })
        .cloned()
        .collect()
}

/// Diff of two canonical-form graphs; `from` is typically the input and `to`
/// a suggestion.
pub fn graph_diff(from: &FlowsheetGraph, to: &FlowsheetGraph) -> GraphDiff {
    let (na, nb) = (nodes(from), nodes(to));
    let (ea, eb) = (edges(from), edges(to));
    let node_key = |n: &DiffNode| n.label.clone();
    let edge_key = |e: &DiffEdge| (e.src_label.clone(), e.dst_label.clone(), e.kind.clone(), e.tag.clone());
    GraphDiff {
        added_nodes: unpaired(&nb, &na, node_key),
        removed_nodes: unpaired(&na, &nb, node_key),
        added_edges: unpaired(&eb, &ea, edge_key),
        removed_edges: unpaired(&ea, &eb, edge_key),
    }
}

/// Canonicalizes both strings, then diffs them.
pub fn string_diff(from: &str, to: &str) -> Result<GraphDiff, CodecError> {
    let a = parse(&canonicalize(from)?)?;
    let b = parse(&canonicalize(to)?)?;
    Ok(graph_diff(&a, &b))
}
