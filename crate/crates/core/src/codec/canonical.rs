//! Canonical serialization.
//!
//! A serialization is produced by a depth-first walk that starts at raw feeds
//! (then at instruments nobody measures), emits every unit once, claims all
//! not-yet-claimed successors of a unit as its tree children at the moment the
//! unit is emitted, and writes every other edge as a numbered connection. The
//! free choices are the order of roots, the order of children (all but the
//! last non-instrument child go into brackets), which of several parallel
//! edges is the tree edge, and how simultaneously opened connection numbers
//! are assigned.
//!
//! The canonical string is the minimum of all such serializations under
//! token-id lexicographic order. Every token is fixed at the moment it is
//! written, so the minimum is found by advancing all live walk states in
//! lock step one token at a time, keeping only those that produced the
//! smallest token, and backtracking if every survivor later turns out to be
//! invalid (heat-exchanger pass binding).

use std::collections::{BTreeMap, HashSet, VecDeque};

use thiserror::Error;

use super::vocab::Token;
use crate::graph::{EdgeKind, EdgeTag, FlowsheetGraph, InstrumentFunction, NodeId, UnitKind, Violation};

pub const MAX_STREAM_CONNECTIONS: usize = 9;
pub const MAX_SIGNAL_CONNECTIONS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SerializeError {
    #[error("graph is empty")]
    EmptyGraph,
    #[error("graph violates structural invariants: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Structure(Vec<Violation>),
    #[error("{0} is not reachable from any raw feed")]
    Unreachable(NodeId),
    #[error("needs {stream} stream and {signal} signal connections (caps are 9 and 4)")]
    ConnectionCap { stream: usize, signal: usize },
    #[error("heat-exchanger passes cannot be ordered for unambiguous binding")]
    UntaggableTopology,
}

const NONE: u16 = u16::MAX;
const CLOSED: u8 = u8::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Unit {
    pub node: usize,
    pub kind: UnitKind,
    pub function: Option<InstrumentFunction>,
}

#[derive(Debug, Clone)]
pub(crate) struct LEdge {
    pub kind: EdgeKind,
    pub tag: Option<EdgeTag>,
    pub src_node: usize,
    pub dst_node: usize,
    /// Fixed unit for stream edges and for signal endpoints that are not
    /// multi-pass exchangers; `None` means "first emitted unit of the node".
    pub src_unit: Option<usize>,
    pub dst_unit: Option<usize>,
}

/// Graph flattened into serialization units (one per node, one per pass for
/// multi-pass heat exchangers).
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub node_ids: Vec<NodeId>,
    pub units: Vec<Unit>,
    pub edges: Vec<LEdge>,
    pub multi: Vec<bool>,
    pub stream_in: Vec<Vec<usize>>,
    pub stream_out: Vec<Vec<usize>>,
    pub signal_in: Vec<Vec<usize>>,
    pub signal_out: Vec<Vec<usize>>,
    pub stream_pairs: usize,
    pub signal_pairs: usize,
}

impl Layout {
    pub fn build(g: &FlowsheetGraph) -> Result<Layout, SerializeError> {
        if g.node_count() == 0 {
            return Err(SerializeError::EmptyGraph);
        }
        let violations = g.validate_structure();
        if !violations.is_empty() {
            return Err(SerializeError::Structure(violations));
        }
        let node_ids: Vec<NodeId> = g.nodes().iter().map(|n| n.id).collect();
        let index: BTreeMap<NodeId, usize> = node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = node_ids.len();

        let mut passes: Vec<Vec<u8>> = vec![Vec::new(); n];
        for e in g.edges().iter().filter(|e| e.kind == EdgeKind::Stream) {
            if let Some(p) = e.tag.and_then(EdgeTag::pass_number) {
                for id in [e.src, e.dst] {
                    let i = index[&id];
                    if g.nodes()[i].kind == UnitKind::HeatExchanger && !passes[i].contains(&p) {
                        passes[i].push(p);
                    }
                }
            }
        }
        let multi: Vec<bool> = passes.iter().map(|p| p.len() >= 2).collect();

        let mut units = Vec::new();
        let mut unit_of: Vec<BTreeMap<Option<u8>, usize>> = vec![BTreeMap::new(); n];
        for (i, node) in g.nodes().iter().enumerate() {
            if multi[i] {
                let mut ps = passes[i].clone();
                ps.sort_unstable();
                for p in ps {
                    unit_of[i].insert(Some(p), units.len());
                    units.push(Unit { node: i, kind: node.kind, function: node.function });
                }
            } else {
                unit_of[i].insert(None, units.len());
                units.push(Unit { node: i, kind: node.kind, function: node.function });
            }
        }

        let endpoint = |node: usize, e_kind: EdgeKind, tag: Option<EdgeTag>| -> Option<usize> {
            if !multi[node] {
                return Some(unit_of[node][&None]);
            }
            match e_kind {
                EdgeKind::Stream => Some(unit_of[node][&tag.and_then(EdgeTag::pass_number)]),
                EdgeKind::Signal => None,
            }
        };

        let mut edges = Vec::new();
        let nu = units.len();
        let mut stream_in = vec![Vec::new(); nu];
        let mut stream_out = vec![Vec::new(); nu];
        let mut signal_in = vec![Vec::new(); n];
        let mut signal_out = vec![Vec::new(); n];
        for e in g.edges() {
            let s = index[&e.src];
            let d = index[&e.dst];
            let le = LEdge {
                kind: e.kind,
                tag: e.tag,
                src_node: s,
                dst_node: d,
                src_unit: endpoint(s, e.kind, e.tag),
                dst_unit: endpoint(d, e.kind, e.tag),
            };
            let k = edges.len();
            match e.kind {
                EdgeKind::Stream => {
                    stream_out[le.src_unit.unwrap()].push(k);
                    stream_in[le.dst_unit.unwrap()].push(k);
                }
                EdgeKind::Signal => {
                    signal_out[s].push(k);
                    signal_in[d].push(k);
                }
            }
            edges.push(le);
        }

        let mut layout = Layout {
            node_ids,
            units,
            edges,
            multi,
            stream_in,
            stream_out,
            signal_in,
            signal_out,
            stream_pairs: 0,
            signal_pairs: 0,
        };
        layout.check_reachability_and_caps()?;
        Ok(layout)
    }

    fn is_tree_signal(&self, e: usize) -> bool {
        let le = &self.edges[e];
        le.kind == EdgeKind::Signal
            && self.units_of_node_kind(le.src_node) != UnitKind::Instrument
            && self.units_of_node_kind(le.dst_node) == UnitKind::Instrument
    }

    fn units_of_node_kind(&self, node: usize) -> UnitKind {
        self.units.iter().find(|u| u.node == node).map(|u| u.kind).unwrap()
    }

    pub fn instrument_unit(&self, node: usize) -> usize {
        self.units.iter().position(|u| u.node == node).unwrap()
    }

    fn check_reachability_and_caps(&mut self) -> Result<(), SerializeError> {
        let nu = self.units.len();
        let mut reached = vec![false; nu];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (u, unit) in self.units.iter().enumerate() {
            if unit.kind == UnitKind::RawFeed {
                reached[u] = true;
                queue.push_back(u);
            }
        }
        let mut node_reached = vec![false; self.node_ids.len()];
        while let Some(u) = queue.pop_front() {
            let node = self.units[u].node;
            let mut next: Vec<usize> =
                self.stream_out[u].iter().map(|&e| self.edges[e].dst_unit.unwrap()).collect();
            if !node_reached[node] {
                node_reached[node] = true;
                for &e in &self.signal_out[node] {
                    if self.is_tree_signal(e) {
                        next.push(self.instrument_unit(self.edges[e].dst_node));
                    }
                }
            }
            for w in next {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        let mut claimed_instruments = 0;
        let mut non_root_streamed = 0;
        for (u, unit) in self.units.iter().enumerate() {
            match unit.kind {
                UnitKind::Instrument => claimed_instruments += reached[u] as usize,
                UnitKind::RawFeed => {}
                _ => {
                    if !reached[u] {
                        return Err(SerializeError::Unreachable(self.node_ids[unit.node]));
                    }
                    non_root_streamed += 1;
                }
            }
        }
        let n_stream = self.edges.iter().filter(|e| e.kind == EdgeKind::Stream).count();
        let n_signal = self.edges.len() - n_stream;
        self.stream_pairs = n_stream - non_root_streamed;
        self.signal_pairs = n_signal - claimed_instruments;
        if self.stream_pairs > MAX_STREAM_CONNECTIONS || self.signal_pairs > MAX_SIGNAL_CONNECTIONS {
            return Err(SerializeError::ConnectionCap { stream: self.stream_pairs, signal: self.signal_pairs });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Item {
    Visit { unit: u16, via: u16 },
    Children { remaining: Vec<(u16, u16)> },
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    emitted: Vec<bool>,
    claimed: Vec<bool>,
    /// Per node: number of units emitted so far.
    node_count: Vec<u8>,
    /// Per node: first emitted unit.
    node_first: Vec<u16>,
    /// Multi-pass exchangers in order of first emission.
    hex_order: Vec<u16>,
    /// Per edge: 0 = no number yet, CLOSED = both ends written.
    num: Vec<u8>,
    next_stream: u8,
    next_signal: u8,
    stack: Vec<Item>,
    queue: VecDeque<Token>,
}

enum Outcome {
    Done,
    Next(Token, State),
}

struct Walker<'a> {
    l: &'a Layout,
}

impl<'a> Walker<'a> {
    fn initial(&self) -> State {
        let nu = self.l.units.len();
        let nn = self.l.node_ids.len();
        State {
            emitted: vec![false; nu],
            claimed: vec![false; nu],
            node_count: vec![0; nn],
            node_first: vec![NONE; nn],
            hex_order: Vec::new(),
            num: vec![0; self.l.edges.len()],
            next_stream: 1,
            next_signal: 1,
            stack: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    fn expand(&self, st: State, out: &mut Vec<Outcome>) {
        let mut work = vec![st];
        while let Some(mut s) = work.pop() {
            if let Some(tok) = s.queue.pop_front() {
                out.push(Outcome::Next(tok, s));
                continue;
            }
            match s.stack.pop() {
                None => {
                    let raws: Vec<usize> = (0..self.l.units.len())
                        .filter(|&u| !s.emitted[u] && self.l.units[u].kind == UnitKind::RawFeed)
                        .collect();
                    let roots = if raws.is_empty() {
                        (0..self.l.units.len()).filter(|&u| !s.emitted[u]).collect()
                    } else {
                        raws
                    };
                    if roots.is_empty() {
                        out.push(Outcome::Done);
                        continue;
                    }
                    for u in roots {
                        let mut t = s.clone();
                        t.claimed[u] = true;
                        t.stack.push(Item::Visit { unit: u as u16, via: NONE });
                        work.push(t);
                    }
                }
                Some(Item::Close) => {
                    s.queue.push_back(Token::Close);
                    work.push(s);
                }
                Some(Item::Children { remaining }) => {
                    for (i, &(c, e)) in remaining.iter().enumerate() {
                        let mut t = s.clone();
                        let inline =
                            remaining.len() == 1 && self.l.units[c as usize].kind != UnitKind::Instrument;
                        if !inline {
                            let mut rest = remaining.clone();
                            rest.remove(i);
                            if !rest.is_empty() {
                                t.stack.push(Item::Children { remaining: rest });
                            }
                            t.stack.push(Item::Close);
                            t.queue.push_back(Token::Open);
                        }
                        t.stack.push(Item::Visit { unit: c, via: e });
                        work.push(t);
                    }
                }
                Some(Item::Visit { unit, via }) => {
                    self.emit(s, unit as usize, via, &mut work);
                }
            }
        }
    }

    fn emit(&self, mut s: State, u: usize, via: u16, work: &mut Vec<State>) {
        let l = self.l;
        let unit = &l.units[u];
        let node = unit.node;
        let mut head = Vec::with_capacity(4);
        if via != NONE {
            if let Some(t @ (EdgeTag::Tout | EdgeTag::Bout)) = l.edges[via as usize].tag {
                head.push(Token::Side(t));
            }
        }
        head.push(Token::Unit(unit.kind));
        if let Some(f) = unit.function {
            head.push(Token::Func(f));
        }
        let first_of_node = s.node_count[node] == 0;
        if l.multi[node] {
            let k = s.node_count[node] + 1;
            if k >= 2 {
                let bound = s.hex_order.iter().copied().find(|&m| s.node_count[m as usize] == k - 1);
                if bound != Some(node as u16) {
                    return;
                }
            }
            head.push(Token::Pass(k));
            if first_of_node {
                s.hex_order.push(node as u16);
                s.node_first[node] = u as u16;
            }
        }
        s.node_count[node] += 1;
        s.emitted[u] = true;
        s.claimed[u] = true;

        let signals_here = !l.multi[node] || first_of_node;
        let is_instrument = unit.kind == UnitKind::Instrument;

        let conn_in: Vec<usize> = l.stream_in[u].iter().copied().filter(|&e| e as u16 != via).collect();
        let sig_in: Vec<usize> = if signals_here {
            l.signal_in[node].iter().copied().filter(|&e| e as u16 != via).collect()
        } else {
            Vec::new()
        };

        // Out-edges split into non-tree ones and groups of candidate tree edges
        // per unclaimed child unit.
        let mut conn_out = Vec::new();
        let mut sig_out = Vec::new();
        let mut child_groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &e in &l.stream_out[u] {
            let d = l.edges[e].dst_unit.unwrap();
            if s.claimed[d] {
                conn_out.push(e);
            } else {
                child_groups.entry(d).or_default().push(e);
            }
        }
        if signals_here {
            for &e in &l.signal_out[node] {
                if is_instrument || l.units_of_node_kind(l.edges[e].dst_node) != UnitKind::Instrument {
                    sig_out.push(e);
                    continue;
                }
                let d = l.instrument_unit(l.edges[e].dst_node);
                if s.claimed[d] {
                    sig_out.push(e);
                } else {
                    child_groups.entry(d).or_default().push(e);
                }
            }
        }

        // Parallel edges to one child: any of them may be the tree edge; only
        // distinct tags lead to distinct strings.
        let mut tree_choices: Vec<Vec<(usize, usize, Vec<usize>)>> = vec![Vec::new()];
        for (&child, group) in &child_groups {
            let mut options: Vec<(usize, Vec<usize>)> = Vec::new();
            let mut seen_tags = Vec::new();
            for (i, &e) in group.iter().enumerate() {
                let tag = l.edges[e].tag;
                if seen_tags.contains(&tag) {
                    continue;
                }
                seen_tags.push(tag);
                let others: Vec<usize> = group.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
                options.push((e, others));
            }
            let mut next = Vec::new();
            for prefix in &tree_choices {
                for (e, others) in &options {
                    let mut p = prefix.clone();
                    p.push((child, *e, others.clone()));
                    next.push(p);
                }
            }
            tree_choices = next;
        }

        for choice in tree_choices {
            let mut t = s.clone();
            let mut conn_out = conn_out.clone();
            let mut sig_out = sig_out.clone();
            let mut children = Vec::with_capacity(choice.len());
            for (child, e, others) in &choice {
                t.claimed[*child] = true;
                children.push((*child as u16, *e as u16));
                for &o in others {
                    match l.edges[o].kind {
                        EdgeKind::Stream => conn_out.push(o),
                        EdgeKind::Signal => sig_out.push(o),
                    }
                }
            }
            let fresh_stream: Vec<usize> =
                conn_in.iter().chain(conn_out.iter()).copied().filter(|&e| t.num[e] == 0).collect();
            let fresh_signal: Vec<usize> =
                sig_in.iter().chain(sig_out.iter()).copied().filter(|&e| t.num[e] == 0).collect();
            for ps in permutations(&fresh_stream) {
                for pg in permutations(&fresh_signal) {
                    let mut v = t.clone();
                    for &e in &ps {
                        v.num[e] = v.next_stream;
                        v.next_stream += 1;
                    }
                    for &e in &pg {
                        v.num[e] = v.next_signal;
                        v.next_signal += 1;
                    }
                    let mut tokens = head.clone();
                    let mut group = |edges: &[usize], make: fn(u8) -> Token, with_side: bool, v: &mut State| {
                        let mut numbered: Vec<(u8, usize)> = edges.iter().map(|&e| (v.num[e], e)).collect();
                        numbered.sort_unstable();
                        for (n, e) in numbered {
                            if with_side {
                                if let Some(t @ (EdgeTag::Tout | EdgeTag::Bout)) = l.edges[e].tag {
                                    tokens.push(Token::Side(t));
                                }
                            }
                            tokens.push(make(n));
                        }
                    };
                    group(&conn_in, Token::ConnIn, false, &mut v);
                    group(&sig_in, Token::SigIn, false, &mut v);
                    group(&conn_out, Token::ConnOut, true, &mut v);
                    group(&sig_out, Token::SigOut, false, &mut v);
                    // Pairs whose other end is already written are complete now.
                    for &e in conn_in.iter().chain(&sig_in).chain(&conn_out).chain(&sig_out) {
                        if fresh_stream.contains(&e) || fresh_signal.contains(&e) {
                            continue;
                        }
                        v.num[e] = CLOSED;
                    }
                    v.queue.extend(tokens);
                    if !children.is_empty() {
                        let mut remaining = children.clone();
                        remaining.sort_unstable();
                        v.stack.push(Item::Children { remaining });
                    }
                    work.push(v);
                }
            }
        }
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn dedup(states: Vec<State>) -> Vec<State> {
    if states.len() <= 1 {
        return states;
    }
    let mut seen = HashSet::with_capacity(states.len());
    states.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// Token sequence of the canonical serialization (no SOS/EOS).
pub fn serialize_tokens(g: &FlowsheetGraph) -> Result<Vec<Token>, SerializeError> {
    let layout = Layout::build(g)?;
    let walker = Walker { l: &layout };
    let mut prefix: Vec<Token> = Vec::new();
    // Untried alternatives per prefix position, largest token first.
    let mut frames: Vec<Vec<(Token, Vec<State>)>> = Vec::new();
    let mut current = vec![walker.initial()];
    let mut outcomes = Vec::new();
    loop {
        outcomes.clear();
        for st in current.drain(..) {
            walker.expand(st, &mut outcomes);
        }
        if outcomes.iter().any(|o| matches!(o, Outcome::Done)) {
            return Ok(prefix);
        }
        let mut groups: BTreeMap<u32, (Token, Vec<State>)> = BTreeMap::new();
        for o in outcomes.drain(..) {
            if let Outcome::Next(tok, st) = o {
                groups.entry(tok.id()).or_insert_with(|| (tok, Vec::new())).1.push(st);
            }
        }
        let mut alternatives: Vec<(Token, Vec<State>)> = groups.into_values().rev().collect();
        match alternatives.pop() {
            Some((tok, states)) => {
                frames.push(alternatives);
                prefix.push(tok);
                current = dedup(states);
            }
            None => loop {
                let Some(frame) = frames.last_mut() else {
                    return Err(SerializeError::UntaggableTopology);
                };
                prefix.pop();
                if let Some((tok, states)) = frame.pop() {
                    prefix.push(tok);
                    current = dedup(states);
                    break;
                }
                frames.pop();
            },
        }
    }
}

pub fn tokens_to_string(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.surface()).collect()
}

/// Canonical SFILES-style string for a structurally valid graph.
pub fn serialize_canonical(g: &FlowsheetGraph) -> Result<String, SerializeError> {
    serialize_tokens(g).map(|t| tokens_to_string(&t))
}
