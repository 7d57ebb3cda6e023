//! Applying catalog edits to an assembled flowsheet.

use std::collections::BTreeMap;

use thiserror::Error;

use super::catalog::Edit;
use crate::graph::{EdgeId, EdgeKind, EdgeTag, FlowsheetGraph, GraphError, NodeId, UnitKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("template name {0} is not bound")]
    Unbound(&'static str),
    #[error("no edge {0} -> {1}")]
    NoEdge(&'static str, &'static str),
    #[error("cannot splice {0}: needs one stream in and one stream out per pass")]
    NotSpliceable(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Tag for a new edge `src→dst` that replaces a path through a removed node:
/// a tag only survives if it still means something at its end of the edge.
pub(crate) fn joined_tag(g: &FlowsheetGraph, src: NodeId, src_tag: Option<EdgeTag>, dst: NodeId, dst_tag: Option<EdgeTag>) -> Option<EdgeTag> {
    let sk = g.kind(src);
    let dk = g.kind(dst);
    let src_ok = |t: EdgeTag| match t {
        EdgeTag::Tout | EdgeTag::Bout => sk == Some(UnitKind::Column),
        _ => sk == Some(UnitKind::HeatExchanger),
    };
    let dst_ok = |t: EdgeTag| t.is_pass() && dk == Some(UnitKind::HeatExchanger);
    src_tag.filter(|&t| src_ok(t)).or(dst_tag.filter(|&t| dst_ok(t)))
}

fn lookup(names: &BTreeMap<&'static str, NodeId>, n: &'static str) -> Result<NodeId, EditError> {
    names.get(n).copied().ok_or(EditError::Unbound(n))
}

fn edge_between(g: &FlowsheetGraph, a: NodeId, b: NodeId, an: &'static str, bn: &'static str) -> Result<EdgeId, EditError> {
    g.find_edge(a, b).ok_or(EditError::NoEdge(an, bn))
}

/// Removes `node` and joins its stream predecessor to its successor, once per
/// pass.
fn splice_out(g: &mut FlowsheetGraph, node: NodeId, name: &'static str) -> Result<(), EditError> {
    let ins: Vec<(NodeId, Option<EdgeTag>)> = g.stream_in(node).map(|(_, e)| (e.src, e.tag)).collect();
    let outs: Vec<(NodeId, Option<EdgeTag>)> = g.stream_out(node).map(|(_, e)| (e.dst, e.tag)).collect();
    let pass = |t: Option<EdgeTag>| t.and_then(EdgeTag::pass_number);
    let mut pairs = Vec::new();
    if g.kind(node) == Some(UnitKind::HeatExchanger) && ins.len() > 1 {
        for &(s, st) in &ins {
            let matching: Vec<_> = outs.iter().filter(|(_, dt)| pass(*dt) == pass(st)).collect();
            let [&(d, dt)] = matching.as_slice() else {
                return Err(EditError::NotSpliceable(name));
            };
            pairs.push((s, st, d, dt));
        }
        if pairs.len() != outs.len() {
            return Err(EditError::NotSpliceable(name));
        }
    } else {
        match (ins.as_slice(), outs.as_slice()) {
            ([(s, st)], [(d, dt)]) => pairs.push((*s, *st, *d, *dt)),
            _ => return Err(EditError::NotSpliceable(name)),
        }
    }
    g.remove_node(node)?;
    for (s, st, d, dt) in pairs {
        let tag = joined_tag(g, s, st, d, dt);
        g.add_edge(s, d, tag)?;
    }
    Ok(())
}

/// Applies `edits` in order. `names` maps template names to graph nodes.
pub fn apply_edits(
    g: &mut FlowsheetGraph,
    names: &BTreeMap<&'static str, NodeId>,
    edits: &[Edit],
) -> Result<(), EditError> {
    for e in edits {
        match *e {
            Edit::RemoveSplice(n) => {
                splice_out(g, lookup(names, n)?, n)?;
            }
            Edit::RemoveNode(n) => {
                g.remove_node(lookup(names, n)?)?;
            }
            Edit::RemoveEdge(a, b) => {
                let id = edge_between(g, lookup(names, a)?, lookup(names, b)?, a, b)?;
                g.remove_edge(id)?;
            }
            Edit::Retarget { src, dst, to } => {
                let id = edge_between(g, lookup(names, src)?, lookup(names, dst)?, src, dst)?;
                g.retarget_edge(id, lookup(names, to)?)?;
            }
            Edit::Reroute { src, dst, from } => {
                let id = edge_between(g, lookup(names, src)?, lookup(names, dst)?, src, dst)?;
                g.reroute_edge_source(id, lookup(names, from)?)?;
            }
            Edit::Retype(n, kind) => {
                g.retype_node(lookup(names, n)?, kind, None)?;
            }
            Edit::SwapTags(n) => {
                let col = lookup(names, n)?;
                let outs: Vec<(EdgeId, Option<EdgeTag>)> = g.stream_out(col).map(|(i, e)| (i, e.tag)).collect();
                for (i, tag) in outs {
                    let swapped = match tag {
                        Some(EdgeTag::Tout) => Some(EdgeTag::Bout),
                        Some(EdgeTag::Bout) => Some(EdgeTag::Tout),
                        t => t,
                    };
                    g.set_edge_tag(i, swapped)?;
                }
            }
            Edit::MoveBefore { node, before } => {
                let id = lookup(names, node)?;
                let kind = g.kind(id).ok_or(EditError::Unbound(node))?;
                // Signal edges of the moved unit follow it.
                let signals: Vec<(NodeId, NodeId)> = g
                    .edges()
                    .iter()
                    .filter(|e| e.kind == EdgeKind::Signal && (e.src == id || e.dst == id))
                    .map(|e| (e.src, e.dst))
                    .collect();
                splice_out(g, id, node)?;
                let target = lookup(names, before)?;
                let feeds: Vec<EdgeId> = g.stream_in(target).map(|(i, _)| i).collect();
                let [feed] = feeds.as_slice() else {
                    return Err(EditError::NotSpliceable(before));
                };
                let old = g.remove_edge(*feed)?;
                let moved = g.add_node_with_id(id, kind, None)?;
                let src_tag = joined_tag(g, old.src, old.tag, moved, None);
                g.add_edge(old.src, moved, src_tag)?;
                let dst_tag = joined_tag(g, moved, None, target, old.tag);
                g.add_edge(moved, target, dst_tag)?;
                for (s, d) in signals {
                    g.add_edge(s, d, None)?;
                }
            }
        }
    }
    Ok(())
}
