//! String to graph. Accepts any well-formed string, canonical or not; node ids
//! are assigned in order of first emission.

use std::collections::BTreeMap;

use thiserror::Error;

use super::vocab::{lex, Token};
use crate::graph::{
    derive_edge_kind, EdgeKind, EdgeTag, FlowsheetGraph, GraphError, InstrumentFunction, NodeId, UnitKind,
    Violation,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty flowsheet string")]
    Empty,
    #[error("unrecognized input at byte {offset}")]
    Lexical { offset: usize },
    #[error("unbalanced bracket at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("empty branch at byte {offset}")]
    EmptyBranch { offset: usize },
    #[error("connection {label} opened at byte {offset} is never closed")]
    UnmatchedConnection { offset: usize, label: String },
    #[error("connection {label} reused at byte {offset}")]
    ReusedConnection { offset: usize, label: String },
    #[error("connection {label} at byte {offset} joins units of the wrong kind for its namespace")]
    ConnectionKind { offset: usize, label: String },
    #[error("connection number outside a unit suffix at byte {offset}")]
    NumberPosition { offset: usize },
    #[error("misplaced tag at byte {offset}")]
    TagPosition { offset: usize },
    #[error("controller function missing or misplaced at byte {offset}")]
    FunctionPosition { offset: usize },
    #[error("pass marker at byte {offset} has no exchanger to bind to")]
    PassBinding { offset: usize },
    #[error("heat-exchanger passes cannot be paired consistently (byte {offset})")]
    PassConflict { offset: usize },
    #[error("instrument used as a stream unit at byte {offset}")]
    InstrumentPosition { offset: usize },
    #[error("raw feed inside a branch at byte {offset}")]
    RawPosition { offset: usize },
    #[error("segment must start with a raw feed or an instrument (byte {offset})")]
    SegmentStart { offset: usize },
    #[error("self-loop at byte {offset}")]
    SelfLoop { offset: usize },
    #[error("invalid edge at byte {offset}: {source}")]
    Edge { offset: usize, source: GraphError },
    #[error("parsed graph violates structural invariants: {0:?}")]
    Structure(Vec<Violation>),
}

impl ParseError {
    /// Byte offset of the offending token, where one exists.
    pub fn offset(&self) -> Option<usize> {
        use ParseError::*;
        match self {
            Empty | Structure(_) => None,
            Lexical { offset }
            | Unbalanced { offset }
            | EmptyBranch { offset }
            | UnmatchedConnection { offset, .. }
            | ReusedConnection { offset, .. }
            | ConnectionKind { offset, .. }
            | NumberPosition { offset }
            | TagPosition { offset }
            | FunctionPosition { offset }
            | PassBinding { offset }
            | PassConflict { offset }
            | InstrumentPosition { offset }
            | RawPosition { offset }
            | SegmentStart { offset }
            | SelfLoop { offset }
            | Edge { offset, .. } => Some(*offset),
        }
    }
}

struct Emission {
    node: usize,
    kind: UnitKind,
    /// Pass label as written, for multi-pass exchangers.
    pass: Option<u8>,
}

struct PEdge {
    src: usize,
    dst: usize,
    side: Option<EdgeTag>,
    offset: usize,
}

#[derive(Default)]
struct Pair {
    out: Option<(usize, Option<EdgeTag>, usize)>,
    inn: Option<(usize, usize)>,
    first: usize,
}

#[derive(Default)]
struct Parser {
    nodes: Vec<(UnitKind, Option<InstrumentFunction>)>,
    emissions: Vec<Emission>,
    /// Multi-pass exchanger nodes with the number of passes bound so far.
    hexes: Vec<(usize, u8)>,
    edges: Vec<PEdge>,
    streams: BTreeMap<u8, Pair>,
    signals: BTreeMap<u8, Pair>,
}

pub fn parse(s: &str) -> Result<FlowsheetGraph, ParseError> {
    let tokens = lex(s).map_err(|offset| ParseError::Lexical { offset })?;
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser::default();
    // Owner emission of each open bracket, and whether the branch has content.
    let mut branches: Vec<(usize, bool, usize)> = Vec::new();
    let mut last: Option<usize> = None;
    // The current emission still accepts suffix tokens.
    let mut in_suffix = false;
    let mut side: Option<(EdgeTag, usize)> = None;
    let mut i = 0;
    while i < tokens.len() {
        let (tok, off) = tokens[i];
        match tok {
            Token::Side(t) => {
                if side.is_some() {
                    return Err(ParseError::TagPosition { offset: off });
                }
                match tokens.get(i + 1) {
                    Some((Token::Unit(_), _)) => {}
                    Some((Token::ConnOut(_), _)) if in_suffix => {}
                    _ => return Err(ParseError::TagPosition { offset: off }),
                }
                side = Some((t, off));
            }
            Token::Unit(kind) => {
                let mut j = i + 1;
                let function = match tokens.get(j) {
                    Some(&(Token::Func(f), _)) => {
                        j += 1;
                        Some(f)
                    }
                    _ => None,
                };
                if (kind == UnitKind::Instrument) != function.is_some() {
                    return Err(ParseError::FunctionPosition { offset: off });
                }
                let pass = match tokens.get(j) {
                    Some(&(Token::Pass(k), poff)) => {
                        if kind != UnitKind::HeatExchanger {
                            return Err(ParseError::PassBinding { offset: poff });
                        }
                        j += 1;
                        Some((k, poff))
                    }
                    _ => None,
                };
                let node = match pass {
                    Some((1, _)) => {
                        p.nodes.push((kind, None));
                        p.hexes.push((p.nodes.len() - 1, 1));
                        p.nodes.len() - 1
                    }
                    Some((k, poff)) => {
                        let slot = p.hexes.iter_mut().find(|(_, n)| *n == k - 1);
                        match slot {
                            Some((node, n)) => {
                                *n = k;
                                *node
                            }
                            None => return Err(ParseError::PassBinding { offset: poff }),
                        }
                    }
                    None => {
                        p.nodes.push((kind, function));
                        p.nodes.len() - 1
                    }
                };
                let e = p.emissions.len();
                p.emissions.push(Emission { node, kind, pass: pass.map(|(k, _)| k) });

                let branch_start = branches.last().is_some_and(|b| !b.1);
                let pred = if branch_start { branches.last().map(|b| b.0) } else { last };
                let side_tag = side.take();
                let attach = match kind {
                    UnitKind::RawFeed => {
                        if !branches.is_empty() {
                            return Err(ParseError::RawPosition { offset: off });
                        }
                        None
                    }
                    UnitKind::Instrument => {
                        if branch_start {
                            pred
                        } else if branches.is_empty() {
                            None
                        } else {
                            return Err(ParseError::InstrumentPosition { offset: off });
                        }
                    }
                    _ => match pred {
                        None => return Err(ParseError::SegmentStart { offset: off }),
                        Some(q) if p.emissions[q].kind == UnitKind::Instrument => {
                            return Err(ParseError::InstrumentPosition { offset: off })
                        }
                        Some(q) => Some(q),
                    },
                };
                match attach {
                    Some(q) => p.edges.push(PEdge { src: q, dst: e, side: side_tag.map(|s| s.0), offset: off }),
                    None => {
                        if let Some((_, soff)) = side_tag {
                            return Err(ParseError::TagPosition { offset: soff });
                        }
                    }
                }
                if let Some(b) = branches.last_mut() {
                    b.1 = true;
                }
                last = Some(e);
                in_suffix = true;
                i = j;
                continue;
            }
            Token::Func(_) => return Err(ParseError::FunctionPosition { offset: off }),
            Token::Pass(_) => return Err(ParseError::PassBinding { offset: off }),
            Token::Open => {
                let Some(owner) = last else {
                    return Err(ParseError::Unbalanced { offset: off });
                };
                if branches.last().is_some_and(|b| !b.1) {
                    return Err(ParseError::EmptyBranch { offset: off });
                }
                if p.emissions[owner].kind == UnitKind::Instrument {
                    return Err(ParseError::InstrumentPosition { offset: off });
                }
                branches.push((owner, false, off));
                in_suffix = false;
            }
            Token::Close => {
                let Some((owner, filled, _)) = branches.pop() else {
                    return Err(ParseError::Unbalanced { offset: off });
                };
                if !filled {
                    return Err(ParseError::EmptyBranch { offset: off });
                }
                last = Some(owner);
                in_suffix = false;
            }
            Token::ConnOut(n) | Token::ConnIn(n) | Token::SigOut(n) | Token::SigIn(n) => {
                if !in_suffix {
                    return Err(ParseError::NumberPosition { offset: off });
                }
                let e = last.expect("suffix follows an emission");
                let tag = side.take().map(|s| s.0);
                let (table, label, outgoing) = match tok {
                    Token::ConnOut(_) => (&mut p.streams, format!("{n}"), true),
                    Token::ConnIn(_) => (&mut p.streams, format!("<{n}"), false),
                    Token::SigOut(_) => (&mut p.signals, format!("_{n}"), true),
                    _ => (&mut p.signals, format!("<_{n}"), false),
                };
                let pair = table.entry(n).or_insert_with(|| Pair { first: off, ..Pair::default() });
                if outgoing {
                    if pair.out.is_some() {
                        return Err(ParseError::ReusedConnection { offset: off, label });
                    }
                    pair.out = Some((e, tag, off));
                } else {
                    if pair.inn.is_some() {
                        return Err(ParseError::ReusedConnection { offset: off, label });
                    }
                    pair.inn = Some((e, off));
                }
            }
            Token::Pad | Token::Sos | Token::Eos | Token::Unk => {
                return Err(ParseError::Lexical { offset: off });
            }
        }
        i += 1;
    }
    if let Some((_, _, off)) = branches.last() {
        return Err(ParseError::Unbalanced { offset: *off });
    }
    p.close_pairs()?;
    p.build()
}

impl Parser {
    fn close_pairs(&mut self) -> Result<(), ParseError> {
        for (signal, table) in [(false, &self.streams), (true, &self.signals)] {
            for (&n, pair) in table {
                let label = match signal {
                    false => format!("{n}"),
                    true => format!("_{n}"),
                };
                let (Some((src, side, off)), Some((dst, _))) = (pair.out, pair.inn) else {
                    return Err(ParseError::UnmatchedConnection { offset: pair.first, label });
                };
                let sk = self.emissions[src].kind;
                let dk = self.emissions[dst].kind;
                if (derive_edge_kind(sk, dk) == EdgeKind::Signal) != signal {
                    return Err(ParseError::ConnectionKind { offset: pair.first, label });
                }
                if self.emissions[src].node == self.emissions[dst].node {
                    return Err(ParseError::SelfLoop { offset: pair.first });
                }
                self.edges.push(PEdge { src, dst, side, offset: off });
            }
        }
        Ok(())
    }

    /// Assigns graph pass numbers to multi-pass emissions so that every stream
    /// edge between two exchangers joins equal pass numbers.
    fn pass_numbers(&self) -> Result<Vec<u8>, ParseError> {
        let n = self.emissions.len();
        let is_multi = |e: usize| self.emissions[e].pass.is_some();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            parent[x] = r;
            r
        }
        for e in &self.edges {
            let stream = derive_edge_kind(self.emissions[e.src].kind, self.emissions[e.dst].kind) == EdgeKind::Stream;
            // A single-pass exchanger between two multi-pass ones carries one
            // pass number on both sides, so it joins their passes too.
            let hex = |x: usize| self.emissions[x].kind == UnitKind::HeatExchanger;
            if stream && hex(e.src) && hex(e.dst) {
                let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
                parent[a.max(b)] = a.min(b);
            }
        }
        let conflict_offset = self.edges.first().map_or(0, |e| e.offset);
        let mut comps: Vec<usize> = Vec::new();
        let mut comp_of = vec![usize::MAX; n];
        for e in (0..n).filter(|&e| is_multi(e)) {
            let r = find(&mut parent, e);
            let c = match comps.iter().position(|&x| x == r) {
                Some(c) => c,
                None => {
                    comps.push(r);
                    comps.len() - 1
                }
            };
            comp_of[e] = c;
        }
        // Components that share an exchanger must get different numbers.
        let mut conflicts = vec![Vec::new(); comps.len()];
        for a in (0..n).filter(|&e| is_multi(e)) {
            for b in (a + 1..n).filter(|&e| is_multi(e)) {
                if self.emissions[a].node == self.emissions[b].node {
                    let (ca, cb) = (comp_of[a], comp_of[b]);
                    if ca == cb {
                        return Err(ParseError::PassConflict { offset: conflict_offset });
                    }
                    conflicts[ca].push(cb);
                    conflicts[cb].push(ca);
                }
            }
        }
        let mut colors = vec![0u8; comps.len()];
        if !color(0, &conflicts, &mut colors) {
            return Err(ParseError::PassConflict { offset: conflict_offset });
        }
        Ok((0..n).map(|e| if is_multi(e) { colors[comp_of[e]] } else { 0 }).collect())
    }

    fn build(self) -> Result<FlowsheetGraph, ParseError> {
        let passes = self.pass_numbers()?;
        let mut g = FlowsheetGraph::new();
        let ids: Vec<NodeId> = self
            .nodes
            .iter()
            .map(|&(k, f)| g.add_node(k, f).expect("parser checks functions"))
            .collect();
        for e in &self.edges {
            let (src, dst) = (&self.emissions[e.src], &self.emissions[e.dst]);
            let stream = derive_edge_kind(src.kind, dst.kind) == EdgeKind::Stream;
            let pass = [e.src, e.dst]
                .into_iter()
                .find(|&x| stream && passes[x] != 0)
                .and_then(|x| EdgeTag::pass(passes[x]));
            let tag = match (e.side, pass) {
                (Some(_), Some(_)) => return Err(ParseError::TagPosition { offset: e.offset }),
                (s, p) => s.or(p),
            };
            if src.node == dst.node {
                return Err(ParseError::SelfLoop { offset: e.offset });
            }
            g.add_edge(ids[src.node], ids[dst.node], tag)
                .map_err(|source| ParseError::Edge { offset: e.offset, source })?;
        }
        let violations = g.validate_structure();
        if !violations.is_empty() {
            return Err(ParseError::Structure(violations));
        }
        Ok(g)
    }
}

fn color(i: usize, conflicts: &[Vec<usize>], colors: &mut [u8]) -> bool {
    if i == colors.len() {
        return true;
    }
    for c in 1..=3u8 {
        if conflicts[i].iter().any(|&j| j < i && colors[j] == c) {
            continue;
        }
        colors[i] = c;
        if color(i + 1, conflicts, colors) {
            return true;
        }
    }
    colors[i] = 0;
    false
}
