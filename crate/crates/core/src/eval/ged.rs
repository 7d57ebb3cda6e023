//! Labeled graph edit distance with unit costs.
//!
//! Node operations: insert, delete, relabel (kind or controller function).
//! Edge operations: insert, delete. An edge label is its kind plus tag class;
//! pass numbers are collapsed because they are arbitrary names.

use crate::graph::{EdgeKind, EdgeTag, FlowsheetGraph, NodeLabel};

/// Largest graph (in nodes) for which [`edit_distance`] is exact.
pub const EXACT_LIMIT: usize = 12;

const EDGE_LABELS: usize = 5;

fn edge_label(kind: EdgeKind, tag: Option<EdgeTag>) -> usize {
    match (kind, tag) {
        (EdgeKind::Signal, _) => 4,
        (EdgeKind::Stream, None) => 0,
        (EdgeKind::Stream, Some(EdgeTag::Tout)) => 1,
        (EdgeKind::Stream, Some(EdgeTag::Bout)) => 2,
        (EdgeKind::Stream, Some(_)) => 3,
    }
}

type Counts = [u8; EDGE_LABELS];

struct Dense {
    labels: Vec<NodeLabel>,
    /// adj[a * n + b]: edge label multiset from a to b.
    adj: Vec<Counts>,
    edges: Vec<(usize, usize, usize)>,
}

impl Dense {
    fn new(g: &FlowsheetGraph) -> Dense {
        let n = g.node_count();
        let index = |id| g.nodes().iter().position(|m| m.id == id).expect("edge endpoints exist");
        let mut adj = vec![[0u8; EDGE_LABELS]; n * n];
        let mut edges = Vec::new();
        for e in g.edges() {
            let (a, b, l) = (index(e.src), index(e.dst), edge_label(e.kind, e.tag));
            adj[a * n + b][l] += 1;
            edges.push((a, b, l));
        }
        Dense { labels: g.nodes().iter().map(|m| m.label()).collect(), adj, edges }
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn at(&self, a: usize, b: usize) -> &Counts {
        &self.adj[a * self.n() + b]
    }
}

fn diff(x: &Counts, y: &Counts) -> u32 {
    x.iter().zip(y).map(|(&p, &q)| (p as i32 - q as i32).unsigned_abs()).sum()
}

fn total(x: &Counts) -> u32 {
    x.iter().map(|&c| c as u32).sum()
}

struct Search<'a> {
    g: &'a Dense,
    h: &'a Dense,
    order: Vec<usize>,
    map: Vec<Option<usize>>,
    used: Vec<bool>,
    best: u32,
}

impl Search<'_> {
    /// Cost of assigning order[k] to `to`, given the earlier assignments.
    fn step_cost(&self, k: usize, to: Option<usize>) -> u32 {
        let a = self.order[k];
        let mut c = match to {
            Some(x) => (self.g.labels[a] != self.h.labels[x]) as u32,
            None => 1,
        };
        for &b in &self.order[..k] {
            let (ab, ba) = (self.g.at(a, b), self.g.at(b, a));
            c += match (to, self.map[b]) {
                (Some(x), Some(y)) => diff(ab, self.h.at(x, y)) + diff(ba, self.h.at(y, x)),
                _ => total(ab) + total(ba),
            };
        }
        c
    }

    /// Cost of everything left in the target once all source nodes are placed.
    fn completion_cost(&self) -> u32 {
        let unused = self.used.iter().filter(|u| !**u).count() as u32;
        let edges = self.h.edges.iter().filter(|&&(x, y, _)| !self.used[x] || !self.used[y]).count() as u32;
        unused + edges
    }

    /// Admissible estimate of the cost of placing order[k..].
    fn lower_bound(&self, k: usize) -> u32 {
        let mut left: Vec<NodeLabel> = self.order[k..].iter().map(|&a| self.g.labels[a]).collect();
        let mut right: Vec<NodeLabel> = (0..self.h.n()).filter(|&x| !self.used[x]).map(|x| self.h.labels[x]).collect();
        left.sort();
        right.sort();
        let (mut i, mut j, mut common) = (0, 0, 0u32);
        while i < left.len() && j < right.len() {
            match left[i].cmp(&right[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let nodes = left.len().max(right.len()) as u32 - common;
        let placed = |a: usize| self.order[..k].contains(&a);
        let mut open = [0i32; EDGE_LABELS];
        for &(a, b, l) in &self.g.edges {
            if !placed(a) || !placed(b) {
                open[l] += 1;
            }
        }
        for &(x, y, l) in &self.h.edges {
            if !self.used[x] || !self.used[y] {
                open[l] -= 1;
            }
        }
        nodes + open.iter().map(|c| c.unsigned_abs()).sum::<u32>()
    }

    fn options(&self, k: usize) -> Vec<Option<usize>> {
        let a = self.order[k];
        let mut opts: Vec<Option<usize>> = (0..self.h.n()).filter(|&x| !self.used[x]).map(Some).collect();
        opts.sort_by_key(|o| o.map(|x| self.h.labels[x] != self.g.labels[a]));
        opts.push(None);
        opts
    }

    fn dfs(&mut self, k: usize, cost: u32) {
        if k == self.order.len() {
            self.best = self.best.min(cost + self.completion_cost());
            return;
        }
        if cost + self.lower_bound(k) >= self.best {
            return;
        }
        for to in self.options(k) {
            let c = cost + self.step_cost(k, to);
            if c >= self.best {
                continue;
            }
            self.assign(k, to);
            self.dfs(k + 1, c);
            self.unassign(k, to);
        }
    }

    fn assign(&mut self, k: usize, to: Option<usize>) {
        self.map[self.order[k]] = to;
        if let Some(x) = to {
            self.used[x] = true;
        }
    }

    fn unassign(&mut self, k: usize, to: Option<usize>) {
        self.map[self.order[k]] = None;
        if let Some(x) = to {
            self.used[x] = false;
        }
    }

    /// Cheapest option at every step, never revisited.
    fn greedy(&mut self) -> u32 {
        let mut cost = 0;
        for k in 0..self.order.len() {
            let to = self
                .options(k)
                .into_iter()
                .min_by_key(|&to| self.step_cost(k, to))
                .expect("deletion is always an option");
            cost += self.step_cost(k, to);
            self.assign(k, to);
        }
        let total = cost + self.completion_cost();
        for k in 0..self.order.len() {
            let to = self.map[self.order[k]];
            self.unassign(k, to);
        }
        total
    }
}

fn search<'a>(g: &'a Dense, h: &'a Dense) -> Search<'a> {
    let degree = |a: usize| g.edges.iter().filter(|&&(x, y, _)| x == a || y == a).count();
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by_key(|&a| std::cmp::Reverse(degree(a)));
    Search { g, h, order, map: vec![None; g.n()], used: vec![false; h.n()], best: u32::MAX }
}

/// Exact edit distance when both graphs have at most [`EXACT_LIMIT`] nodes,
/// otherwise the cost of a greedy node assignment (an upper bound).
pub fn edit_distance(a: &FlowsheetGraph, b: &FlowsheetGraph) -> u32 {
    let (g, h) = (Dense::new(a), Dense::new(b));
    let mut s = search(&g, &h);
    s.best = s.greedy();
    if g.n().max(h.n()) <= EXACT_LIMIT {
        s.dfs(0, 0);
    }
    s.best
}

/// Greedy upper bound only.
pub fn edit_distance_upper_bound(a: &FlowsheetGraph, b: &FlowsheetGraph) -> u32 {
    let (g, h) = (Dense::new(a), Dense::new(b));
    search(&g, &h).greedy()
}
