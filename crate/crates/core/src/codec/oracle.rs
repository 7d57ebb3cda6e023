//! Brute-force reference for the canonical serializer, for tests on small
//! graphs. Enumerates every complete walk string, numbers connections by
//! first appearance, keeps the strings that parse back to the input graph and
//! returns the smallest.

use std::collections::BTreeMap;

use super::canonical::{Layout, SerializeError};
use super::parse::parse;
use super::vocab::Token;
use crate::graph::{EdgeKind, EdgeTag, FlowsheetGraph, NodeId, UnitKind};

/// Largest graph the oracle accepts.
pub const ORACLE_MAX_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sym {
    Tok(Token),
    /// Non-tree edge endpoint; numbered after the walk is complete.
    Conn { edge: usize, out: bool },
}

#[derive(Clone)]
struct St {
    emitted: Vec<bool>,
    claimed: Vec<bool>,
    node_count: Vec<u8>,
    /// Emission order of graph nodes (first unit only).
    order: Vec<usize>,
}

type Walks = Vec<(Vec<Sym>, St)>;

struct Gen<'a> {
    l: &'a Layout,
}

impl Gen<'_> {
    fn kind_of_node(&self, node: usize) -> UnitKind {
        self.l.units.iter().find(|u| u.node == node).unwrap().kind
    }

    fn roots(&self, st: St) -> Walks {
        let unemitted: Vec<usize> = (0..self.l.units.len()).filter(|&u| !st.emitted[u]).collect();
        if unemitted.is_empty() {
            return vec![(Vec::new(), st)];
        }
        let raws: Vec<usize> =
            unemitted.iter().copied().filter(|&u| self.l.units[u].kind == UnitKind::RawFeed).collect();
        let candidates = if raws.is_empty() { unemitted } else { raws };
        let mut out = Vec::new();
        for r in candidates {
            let mut s = st.clone();
            s.claimed[r] = true;
            for (a, s1) in self.visit(s, r, None) {
                for (b, s2) in self.roots(s1) {
                    let mut v = a.clone();
                    v.extend(b);
                    out.push((v, s2));
                }
            }
        }
        out
    }

    fn visit(&self, mut st: St, u: usize, via: Option<usize>) -> Walks {
        let l = self.l;
        let unit = &l.units[u];
        let node = unit.node;
        let mut head = Vec::new();
        if let Some(t @ (EdgeTag::Tout | EdgeTag::Bout)) = via.and_then(|e| l.edges[e].tag) {
            head.push(Sym::Tok(Token::Side(t)));
        }
        head.push(Sym::Tok(Token::Unit(unit.kind)));
        if let Some(f) = unit.function {
            head.push(Sym::Tok(Token::Func(f)));
        }
        let first = st.node_count[node] == 0;
        if l.multi[node] {
            head.push(Sym::Tok(Token::Pass(st.node_count[node] + 1)));
        }
        if first {
            st.order.push(node);
        }
        st.node_count[node] += 1;
        st.emitted[u] = true;
        st.claimed[u] = true;

        let signals_here = !l.multi[node] || first;
        let instrument = unit.kind == UnitKind::Instrument;
        let not_via = |e: &usize| Some(*e) != via;
        let conn_in: Vec<usize> = l.stream_in[u].iter().copied().filter(not_via).collect();
        let sig_in: Vec<usize> = if signals_here {
            l.signal_in[node].iter().copied().filter(not_via).collect()
        } else {
            Vec::new()
        };
        let mut conn_out = Vec::new();
        let mut sig_out = Vec::new();
        // Candidate tree edges per child unit.
        let mut cands: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &e in &l.stream_out[u] {
            let d = l.edges[e].dst_unit.unwrap();
            if st.claimed[d] {
                conn_out.push(e);
            } else {
                cands.entry(d).or_default().push(e);
            }
        }
        if signals_here {
            for &e in &l.signal_out[node] {
                let dn = l.edges[e].dst_node;
                if instrument || self.kind_of_node(dn) != UnitKind::Instrument {
                    sig_out.push(e);
                    continue;
                }
                let d = l.instrument_unit(dn);
                if st.claimed[d] {
                    sig_out.push(e);
                } else {
                    cands.entry(d).or_default().push(e);
                }
            }
        }
        for &d in cands.keys() {
            st.claimed[d] = true;
        }

        // Every way of picking the tree edge among parallel candidates.
        let mut picks: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
        for (&d, es) in &cands {
            picks = picks
                .into_iter()
                .flat_map(|p| {
                    es.iter().map(move |&e| {
                        let mut q = p.clone();
                        q.push((d, e));
                        q
                    })
                })
                .collect();
        }

        let mut out = Vec::new();
        for pick in picks {
            let mut co = conn_out.clone();
            let mut so = sig_out.clone();
            for (d, es) in &cands {
                let tree = pick.iter().find(|p| p.0 == *d).unwrap().1;
                for &e in es.iter().filter(|&&e| e != tree) {
                    match l.edges[e].kind {
                        EdgeKind::Stream => co.push(e),
                        EdgeKind::Signal => so.push(e),
                    }
                }
            }
            for a in perms(&conn_in) {
                for b in perms(&sig_in) {
                    for c in perms(&co) {
                        for d in perms(&so) {
                            let mut syms = head.clone();
                            syms.extend(a.iter().map(|&e| Sym::Conn { edge: e, out: false }));
                            syms.extend(b.iter().map(|&e| Sym::Conn { edge: e, out: false }));
                            for &e in &c {
                                if let Some(t @ (EdgeTag::Tout | EdgeTag::Bout)) = l.edges[e].tag {
                                    syms.push(Sym::Tok(Token::Side(t)));
                                }
                                syms.push(Sym::Conn { edge: e, out: true });
                            }
                            syms.extend(d.iter().map(|&e| Sym::Conn { edge: e, out: true }));
                            let children: Vec<(usize, usize)> = pick.clone();
                            for (rest, s) in self.children(st.clone(), children) {
                                let mut v = syms.clone();
                                v.extend(rest);
                                out.push((v, s));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn children(&self, st: St, remaining: Vec<(usize, usize)>) -> Walks {
        if remaining.is_empty() {
            return vec![(Vec::new(), st)];
        }
        let mut out = Vec::new();
        for i in 0..remaining.len() {
            let (c, e) = remaining[i];
            let mut rest = remaining.clone();
            rest.remove(i);
            let inline = rest.is_empty() && self.l.units[c].kind != UnitKind::Instrument;
            for (a, s1) in self.visit(st.clone(), c, Some(e)) {
                if inline {
                    out.push((a, s1));
                    continue;
                }
                for (b, s2) in self.children(s1, rest.clone()) {
                    let mut v = vec![Sym::Tok(Token::Open)];
                    v.extend(a.iter().copied());
                    v.push(Sym::Tok(Token::Close));
                    v.extend(b);
                    out.push((v, s2));
                }
            }
        }
        out
    }
}

fn perms(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in perms(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Numbers connections by first appearance. Returns `None` if a numbered
/// group ends up out of ascending order or a namespace overflows.
fn number(syms: &[Sym], l: &Layout) -> Option<Vec<Token>> {
    let mut num: BTreeMap<usize, u8> = BTreeMap::new();
    let (mut next_stream, mut next_signal) = (1u8, 1u8);
    let mut out = Vec::with_capacity(syms.len());
    for s in syms {
        match *s {
            Sym::Tok(t) => out.push(t),
            Sym::Conn { edge, out: dir_out } => {
                let signal = l.edges[edge].kind == EdgeKind::Signal;
                let n = *num.entry(edge).or_insert_with(|| {
                    let c = if signal { &mut next_signal } else { &mut next_stream };
                    *c += 1;
                    *c - 1
                });
                let limit = if signal { 4 } else { 9 };
                if n > limit {
                    return None;
                }
                let tok = match (signal, dir_out) {
                    (false, true) => Token::ConnOut(n),
                    (false, false) => Token::ConnIn(n),
                    (true, true) => Token::SigOut(n),
                    (true, false) => Token::SigIn(n),
                };
                if let Some(&prev) = out.iter().rev().find(|t| !matches!(t, Token::Side(_))) {
                    if std::mem::discriminant(&prev) == std::mem::discriminant(&tok) && prev.id() > tok.id() {
                        return None;
                    }
                }
                out.push(tok);
            }
        }
    }
    Some(out)
}

/// Edge multiset under a node mapping, with pass tags replaced through a
/// per-node pass relabeling.
fn edge_signature(
    g: &FlowsheetGraph,
    map: &BTreeMap<NodeId, usize>,
    pass_map: &BTreeMap<(usize, u8), u8>,
) -> Vec<(usize, usize, Option<EdgeTag>)> {
    let mut v: Vec<_> = g
        .edges()
        .iter()
        .map(|e| {
            let (s, d) = (map[&e.src], map[&e.dst]);
            let tag = match e.tag.and_then(EdgeTag::pass_number) {
                Some(p) => {
                    let q = pass_map.get(&(s, p)).or_else(|| pass_map.get(&(d, p))).copied();
                    q.and_then(EdgeTag::pass)
                }
                None => e.tag,
            };
            (s, d, tag)
        })
        .collect();
    v.sort_by_key(|&(s, d, t)| (s, d, t.map(|t| t as u8)));
    v
}

/// Passes used by each multi-pass exchanger, keyed by mapped node index.
fn multi_passes(g: &FlowsheetGraph, map: &BTreeMap<NodeId, usize>) -> BTreeMap<usize, Vec<u8>> {
    let mut out: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    for e in g.edges() {
        if let Some(p) = e.tag.and_then(EdgeTag::pass_number) {
            for id in [e.src, e.dst] {
                if g.kind(id) == Some(UnitKind::HeatExchanger) {
                    let v = out.entry(map[&id]).or_default();
                    if !v.contains(&p) {
                        v.push(p);
                    }
                }
            }
        }
    }
    out.retain(|_, v| v.len() >= 2);
    out
}

/// True if `parsed` (node i = i-th emitted node) is `g` under `order`, up to
/// renumbering of exchanger passes.
fn matches(g: &FlowsheetGraph, order: &[usize], parsed: &FlowsheetGraph) -> bool {
    if g.node_count() != parsed.node_count() || g.edge_count() != parsed.edge_count() {
        return false;
    }
    let gmap: BTreeMap<NodeId, usize> =
        order.iter().enumerate().map(|(i, &n)| (g.nodes()[n].id, i)).collect();
    let pmap: BTreeMap<NodeId, usize> = parsed.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    for (i, &n) in order.iter().enumerate() {
        if g.nodes()[n].label() != parsed.nodes()[i].label() {
            return false;
        }
    }
    let gp = multi_passes(g, &gmap);
    let pp = multi_passes(parsed, &pmap);
    if gp.keys().ne(pp.keys()) {
        return false;
    }
    // Identity relabeling for the parsed graph, every bijection for `g`.
    let ident: BTreeMap<(usize, u8), u8> =
        pp.iter().flat_map(|(&n, ps)| ps.iter().map(move |&p| ((n, p), p))).collect();
    let target = edge_signature(parsed, &pmap, &ident);
    let nodes: Vec<(usize, Vec<u8>, Vec<u8>)> = gp
        .iter()
        .map(|(n, ps)| {
            let mut a = ps.clone();
            a.sort_unstable();
            let mut b = pp[n].clone();
            b.sort_unstable();
            (*n, a, b)
        })
        .collect();
    if nodes.iter().any(|(_, a, b)| a.len() != b.len()) {
        return false;
    }
    fn search(
        i: usize,
        nodes: &[(usize, Vec<u8>, Vec<u8>)],
        acc: &mut BTreeMap<(usize, u8), u8>,
        check: &dyn Fn(&BTreeMap<(usize, u8), u8>) -> bool,
    ) -> bool {
        if i == nodes.len() {
            return check(acc);
        }
        let (n, from, to) = &nodes[i];
        for p in perms(&(0..to.len()).collect::<Vec<_>>()) {
            for (k, &j) in p.iter().enumerate() {
                acc.insert((*n, from[k]), to[j]);
            }
            if search(i + 1, nodes, acc, check) {
                return true;
            }
        }
        false
    }
    let check = |m: &BTreeMap<(usize, u8), u8>| edge_signature(g, &gmap, m) == target;
    search(0, &nodes, &mut BTreeMap::new(), &check)
}

/// Exhaustive canonical serialization; `None` if the graph has more than
/// [`ORACLE_MAX_NODES`] nodes.
pub fn canonical_oracle(g: &FlowsheetGraph) -> Option<Result<Vec<Token>, SerializeError>> {
    if g.node_count() > ORACLE_MAX_NODES {
        return None;
    }
    let layout = match Layout::build(g) {
        Ok(l) => l,
        Err(e) => return Some(Err(e)),
    };
    let gen = Gen { l: &layout };
    let st = St {
        emitted: vec![false; layout.units.len()],
        claimed: vec![false; layout.units.len()],
        node_count: vec![0; layout.node_ids.len()],
        order: Vec::new(),
    };
    let mut best: Option<Vec<Token>> = None;
    for (syms, end) in gen.roots(st) {
        let Some(tokens) = number(&syms, &layout) else { continue };
        let key: Vec<u32> = tokens.iter().map(|t| t.id()).collect();
        if best.as_ref().is_some_and(|b| b.iter().map(|t| t.id()).le(key.iter().copied())) {
            continue;
        }
        let s: String = tokens.iter().map(|t| t.surface()).collect();
        let Ok(parsed) = parse(&s) else { continue };
        if matches(g, &end.order, &parsed) {
            best = Some(tokens);
        }
    }
    Some(best.ok_or(SerializeError::UntaggableTopology))
}
