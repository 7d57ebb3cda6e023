//! Typed directed multigraph of unit operations, stream edges and signal edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Closed set of unit-operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitKind {
    RawFeed,
    Product,
    Mixer,
    Splitter,
    HeatExchanger,
    Pump,
    Compressor,
    Reactor,
    Column,
    Storage,
    Valve,
    Instrument,
}

impl UnitKind {
    pub const ALL: [UnitKind; 12] = [
        UnitKind::RawFeed,
        UnitKind::Product,
        UnitKind::Mixer,
        UnitKind::Splitter,
        UnitKind::HeatExchanger,
        UnitKind::Pump,
        UnitKind::Compressor,
        UnitKind::Reactor,
        UnitKind::Column,
        UnitKind::Storage,
        UnitKind::Valve,
        UnitKind::Instrument,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            UnitKind::RawFeed => "raw",
            UnitKind::Product => "prod",
            UnitKind::Mixer => "mix",
            UnitKind::Splitter => "splt",
            UnitKind::HeatExchanger => "hex",
            UnitKind::Pump => "pp",
            UnitKind::Compressor => "comp",
            UnitKind::Reactor => "r",
            UnitKind::Column => "dist",
            UnitKind::Storage => "tank",
            UnitKind::Valve => "v",
            UnitKind::Instrument => "C",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<UnitKind> {
        UnitKind::ALL.iter().copied().find(|k| k.mnemonic() == s)
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Controller type carried by instrument nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InstrumentFunction {
    TC,
    PC,
    FC,
    LC,
}

impl InstrumentFunction {
    pub const ALL: [InstrumentFunction; 4] = [
        InstrumentFunction::TC,
        InstrumentFunction::PC,
        InstrumentFunction::FC,
        InstrumentFunction::LC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstrumentFunction::TC => "TC",
            InstrumentFunction::PC => "PC",
            InstrumentFunction::FC => "FC",
            InstrumentFunction::LC => "LC",
        }
    }

    pub fn parse(s: &str) -> Option<InstrumentFunction> {
        InstrumentFunction::ALL.iter().copied().find(|f| f.as_str() == s)
    }
}

impl fmt::Display for InstrumentFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Stream,
    Signal,
}

/// Optional edge label: column outlet side or heat-exchanger pass id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeTag {
    Tout,
    Bout,
    P1,
    P2,
    P3,
}

impl EdgeTag {
    pub const ALL: [EdgeTag; 5] = [EdgeTag::Tout, EdgeTag::Bout, EdgeTag::P1, EdgeTag::P2, EdgeTag::P3];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeTag::Tout => "tout",
            EdgeTag::Bout => "bout",
            EdgeTag::P1 => "p1",
            EdgeTag::P2 => "p2",
            EdgeTag::P3 => "p3",
        }
    }

    pub fn parse(s: &str) -> Option<EdgeTag> {
        EdgeTag::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    pub fn is_pass(self) -> bool {
        matches!(self, EdgeTag::P1 | EdgeTag::P2 | EdgeTag::P3)
    }

    /// 1-based pass number for pass tags.
    pub fn pass_number(self) -> Option<u8> {
        match self {
            EdgeTag::P1 => Some(1),
            EdgeTag::P2 => Some(2),
            EdgeTag::P3 => Some(3),
            _ => None,
        }
    }

    pub fn pass(n: u8) -> Option<EdgeTag> {
        match n {
            1 => Some(EdgeTag::P1),
            2 => Some(EdgeTag::P2),
            3 => Some(EdgeTag::P3),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Opaque node identifier. Never influences serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Index into [`FlowsheetGraph::edges`]. Invalidated by edge removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: UnitKind,
    pub function: Option<InstrumentFunction>,
}

impl Node {
    pub fn label(&self) -> NodeLabel {
        NodeLabel { kind: self.kind, function: self.function }
    }
}

/// Kind plus controller function; what a node "is" independent of its id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeLabel {
    pub kind: UnitKind,
    pub function: Option<InstrumentFunction>,
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.function {
            Some(func) => write!(f, "{}:{}", self.kind, func),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub tag: Option<EdgeTag>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("instrument nodes require a controller function")]
    MissingFunction,
    #[error("{0} nodes cannot carry a controller function")]
    UnexpectedFunction(UnitKind),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("self-loop on {0}")]
    SelfLoop(NodeId),
    #[error("tag {tag} is not allowed on edge {src} -> {dst}")]
    IllegalTag { src: NodeId, dst: NodeId, tag: EdgeTag },
    #[error("stream edge into raw feed {0}")]
    StreamIntoRawFeed(NodeId),
    #[error("stream edge out of product {0}")]
    StreamOutOfProduct(NodeId),
    #[error("edge {0} does not exist")]
    UnknownEdge(usize),
}

/// One violated structural invariant, with the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfLoop { edge: usize },
    DanglingEndpoint { edge: usize, node: NodeId },
    FunctionMismatch { node: NodeId },
    StreamIntoRawFeed { edge: usize },
    StreamOutOfProduct { edge: usize },
    WrongEdgeKind { edge: usize },
    IllegalTag { edge: usize, tag: EdgeTag },
    PassPairing { node: NodeId, pass: u8, incoming: usize, outgoing: usize },
    MixedPassTagging { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { edge } => write!(f, "edge #{edge} is a self-loop"),
            Violation::DanglingEndpoint { edge, node } => {
                write!(f, "edge #{edge} references missing node {node}")
            }
            Violation::FunctionMismatch { node } => {
                write!(f, "node {node}: controller function present iff instrument")
            }
            Violation::StreamIntoRawFeed { edge } => write!(f, "edge #{edge} streams into a raw feed"),
            Violation::StreamOutOfProduct { edge } => write!(f, "edge #{edge} streams out of a product"),
            Violation::WrongEdgeKind { edge } => {
                write!(f, "edge #{edge} has a kind inconsistent with its endpoints")
            }
            Violation::IllegalTag { edge, tag } => write!(f, "edge #{edge} carries illegal tag {tag}"),
            Violation::PassPairing { node, pass, incoming, outgoing } => write!(
                f,
                "heat exchanger {node} pass p{pass} has {incoming} incoming and {outgoing} outgoing streams"
            ),
            Violation::MixedPassTagging { node } => {
                write!(f, "heat exchanger {node} mixes pass-tagged and untagged streams")
            }
        }
    }
}

/// Edge kind is a pure function of the endpoint kinds.
pub fn derive_edge_kind(src: UnitKind, dst: UnitKind) -> EdgeKind {
    if src == UnitKind::Instrument || dst == UnitKind::Instrument {
        EdgeKind::Signal
    } else {
        EdgeKind::Stream
    }
}

fn tag_allowed(tag: EdgeTag, kind: EdgeKind, src: UnitKind, dst: UnitKind) -> bool {
    if kind == EdgeKind::Signal {
        return false;
    }
    match tag {
        EdgeTag::Tout | EdgeTag::Bout => src == UnitKind::Column,
        _ => src == UnitKind::HeatExchanger || dst == UnitKind::HeatExchanger,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowsheetGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    next_id: u32,
}

impl FlowsheetGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    pub fn kind(&self, id: NodeId) -> Option<UnitKind> {
        self.node(id).map(|n| n.kind)
    }

    fn check_function(kind: UnitKind, function: Option<InstrumentFunction>) -> Result<(), GraphError> {
        match (kind, function) {
            (UnitKind::Instrument, None) => Err(GraphError::MissingFunction),
            (UnitKind::Instrument, Some(_)) | (_, None) => Ok(()),
            (k, Some(_)) => Err(GraphError::UnexpectedFunction(k)),
        }
    }

    pub fn add_node(
        &mut self,
        kind: UnitKind,
        function: Option<InstrumentFunction>,
    ) -> Result<NodeId, GraphError> {
        Self::check_function(kind, function)?;
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.push(Node { id, kind, function });
        Ok(id)
    }

    /// Shorthand for non-instrument nodes.
    pub fn add_unit(&mut self, kind: UnitKind) -> Result<NodeId, GraphError> {
        self.add_node(kind, None)
    }

    pub fn add_instrument(&mut self, function: InstrumentFunction) -> NodeId {
        self.add_node(UnitKind::Instrument, Some(function))
            .expect("instrument with function is always valid")
    }

    /// Inserts a node under a caller-chosen id (graph import, relabeling).
    pub fn add_node_with_id(
        &mut self,
        id: NodeId,
        kind: UnitKind,
        function: Option<InstrumentFunction>,
    ) -> Result<NodeId, GraphError> {
        Self::check_function(kind, function)?;
        if self.contains(id) {
            return Err(GraphError::DuplicateNode(id));
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.nodes.push(Node { id, kind, function });
        Ok(id)
    }

    pub fn add_edge(
        &mut self,
        src: NodeId,
        dst: NodeId,
        tag: Option<EdgeTag>,
    ) -> Result<EdgeId, GraphError> {
        let edge = self.make_edge(src, dst, tag)?;
        self.edges.push(edge);
        Ok(EdgeId(self.edges.len() - 1))
    }

    fn make_edge(&self, src: NodeId, dst: NodeId, tag: Option<EdgeTag>) -> Result<Edge, GraphError> {
        let sk = self.kind(src).ok_or(GraphError::UnknownNode(src))?;
        let dk = self.kind(dst).ok_or(GraphError::UnknownNode(dst))?;
        if src == dst {
            return Err(GraphError::SelfLoop(src));
        }
        let kind = derive_edge_kind(sk, dk);
        if let Some(t) = tag {
            if !tag_allowed(t, kind, sk, dk) {
                return Err(GraphError::IllegalTag { src, dst, tag: t });
            }
        }
        if kind == EdgeKind::Stream {
            if dk == UnitKind::RawFeed {
                return Err(GraphError::StreamIntoRawFeed(dst));
            }
            if sk == UnitKind::Product {
                return Err(GraphError::StreamOutOfProduct(src));
            }
        }
        Ok(Edge { src, dst, kind, tag })
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, id: NodeId) -> Result<Node, GraphError> {
        let pos = self.nodes.iter().position(|n| n.id == id).ok_or(GraphError::UnknownNode(id))?;
        self.edges.retain(|e| e.src != id && e.dst != id);
        Ok(self.nodes.remove(pos))
    }

    pub fn remove_edge(&mut self, edge: EdgeId) -> Result<Edge, GraphError> {
        if edge.0 >= self.edges.len() {
            return Err(GraphError::UnknownEdge(edge.0));
        }
        Ok(self.edges.remove(edge.0))
    }

    /// Moves the destination of an edge, re-deriving its kind and keeping its tag.
    pub fn retarget_edge(&mut self, edge: EdgeId, new_dst: NodeId) -> Result<(), GraphError> {
        let old = self.edges.get(edge.0).ok_or(GraphError::UnknownEdge(edge.0))?.clone();
        let replacement = self.make_edge(old.src, new_dst, old.tag)?;
        self.edges[edge.0] = replacement;
        Ok(())
    }

    /// Moves the source of an edge, re-deriving its kind and keeping its tag.
    pub fn reroute_edge_source(&mut self, edge: EdgeId, new_src: NodeId) -> Result<(), GraphError> {
        let old = self.edges.get(edge.0).ok_or(GraphError::UnknownEdge(edge.0))?.clone();
        let replacement = self.make_edge(new_src, old.dst, old.tag)?;
        self.edges[edge.0] = replacement;
        Ok(())
    }

    pub fn set_edge_tag(&mut self, edge: EdgeId, tag: Option<EdgeTag>) -> Result<(), GraphError> {
        let old = self.edges.get(edge.0).ok_or(GraphError::UnknownEdge(edge.0))?.clone();
        let replacement = self.make_edge(old.src, old.dst, tag)?;
        self.edges[edge.0] = replacement;
        Ok(())
    }

    /// Changes a node's kind. Does not re-check incident edges; use
    /// [`validate_structure`](Self::validate_structure) afterwards.
    pub fn retype_node(
        &mut self,
        id: NodeId,
        kind: UnitKind,
        function: Option<InstrumentFunction>,
    ) -> Result<(), GraphError> {
        Self::check_function(kind, function)?;
        let node = self.nodes.iter_mut().find(|n| n.id == id).ok_or(GraphError::UnknownNode(id))?;
        node.kind = kind;
        node.function = function;
        let kinds: BTreeMap<NodeId, UnitKind> = self.nodes.iter().map(|n| (n.id, n.kind)).collect();
        for e in &mut self.edges {
            if let (Some(&s), Some(&d)) = (kinds.get(&e.src), kinds.get(&e.dst)) {
                e.kind = derive_edge_kind(s, d);
            }
        }
        Ok(())
    }

    pub fn find_edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.src == src && e.dst == dst).map(EdgeId)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(id.0)
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = (EdgeId, &Edge)> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.src == id).map(|(i, e)| (EdgeId(i), e))
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = (EdgeId, &Edge)> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.dst == id).map(|(i, e)| (EdgeId(i), e))
    }

    pub fn stream_in(&self, id: NodeId) -> impl Iterator<Item = (EdgeId, &Edge)> + '_ {
        self.in_edges(id).filter(|(_, e)| e.kind == EdgeKind::Stream)
    }

    pub fn stream_out(&self, id: NodeId) -> impl Iterator<Item = (EdgeId, &Edge)> + '_ {
        self.out_edges(id).filter(|(_, e)| e.kind == EdgeKind::Stream)
    }

    /// Copies every node and edge of `other` into `self` under fresh ids.
    /// Returns the id mapping from `other` to `self`.
    pub fn absorb(&mut self, other: &FlowsheetGraph) -> BTreeMap<NodeId, NodeId> {
        let mut map = BTreeMap::new();
        for n in &other.nodes {
            let id = self.add_node(n.kind, n.function).expect("source node is valid");
            map.insert(n.id, id);
        }
        for e in &other.edges {
            self.edges.push(Edge { src: map[&e.src], dst: map[&e.dst], kind: e.kind, tag: e.tag });
        }
        map
    }

    /// Same graph with node ids replaced through `f` and edges stored in `edge_order`.
    pub fn relabeled(&self, f: impl Fn(NodeId) -> NodeId, edge_order: &[usize]) -> FlowsheetGraph {
        let mut g = FlowsheetGraph::new();
        for n in &self.nodes {
            g.add_node_with_id(f(n.id), n.kind, n.function).expect("relabeling must be injective");
        }
        for &i in edge_order {
            let e = &self.edges[i];
            g.edges.push(Edge { src: f(e.src), dst: f(e.dst), kind: e.kind, tag: e.tag });
        }
        g
    }

    /// Reports every structural invariant the graph violates. An empty list
    /// means the graph is serializable (subject to the connection caps).
    pub fn validate_structure(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let kinds: BTreeMap<NodeId, UnitKind> = self.nodes.iter().map(|n| (n.id, n.kind)).collect();
        for n in &self.nodes {
            if (n.kind == UnitKind::Instrument) != n.function.is_some() {
                out.push(Violation::FunctionMismatch { node: n.id });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.src == e.dst {
                out.push(Violation::SelfLoop { edge: i });
            }
            let (sk, dk) = match (kinds.get(&e.src), kinds.get(&e.dst)) {
                (Some(&s), Some(&d)) => (s, d),
                (None, _) => {
                    out.push(Violation::DanglingEndpoint { edge: i, node: e.src });
                    continue;
                }
                (_, None) => {
                    out.push(Violation::DanglingEndpoint { edge: i, node: e.dst });
                    continue;
                }
            };
            if e.kind != derive_edge_kind(sk, dk) {
                out.push(Violation::WrongEdgeKind { edge: i });
            }
            if let Some(t) = e.tag {
                if !tag_allowed(t, e.kind, sk, dk) {
                    out.push(Violation::IllegalTag { edge: i, tag: t });
                }
            }
            if e.kind == EdgeKind::Stream {
                if dk == UnitKind::RawFeed {
                    out.push(Violation::StreamIntoRawFeed { edge: i });
                }
                if sk == UnitKind::Product {
                    out.push(Violation::StreamOutOfProduct { edge: i });
                }
            }
        }
        for n in self.nodes.iter().filter(|n| n.kind == UnitKind::HeatExchanger) {
            let streams: Vec<(bool, Option<u8>)> = self
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::Stream && (e.src == n.id || e.dst == n.id))
                .map(|e| (e.dst == n.id, e.tag.and_then(EdgeTag::pass_number)))
                .collect();
            let tagged = streams.iter().filter(|(_, p)| p.is_some()).count();
            let distinct: BTreeSet<u8> = streams.iter().filter_map(|&(_, p)| p).collect();
            // Pass tags only pair up streams of exchangers with two or more passes.
            if distinct.len() < 2 {
                continue;
            }
            if tagged != streams.len() {
                out.push(Violation::MixedPassTagging { node: n.id });
                continue;
            }
            for pass in 1..=3u8 {
                let incoming = streams.iter().filter(|&&(inc, p)| inc && p == Some(pass)).count();
                let outgoing = streams.iter().filter(|&&(inc, p)| !inc && p == Some(pass)).count();
                if (incoming, outgoing) != (0, 0) && (incoming, outgoing) != (1, 1) {
                    out.push(Violation::PassPairing { node: n.id, pass, incoming, outgoing });
                }
            }
        }
        out
    }

    pub fn is_structurally_valid(&self) -> bool {
        self.validate_structure().is_empty()
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id.0,
                    kind: n.kind.mnemonic().to_string(),
                    function: n.function.map(|f| f.as_str().to_string()),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson { src: e.src.0, dst: e.dst.0, tag: e.tag.map(|t| t.as_str().to_string()) })
                .collect(),
        }
    }

    pub fn from_json(doc: &GraphJson) -> Result<FlowsheetGraph, GraphJsonError> {
        let mut g = FlowsheetGraph::new();
        for n in &doc.nodes {
            let kind = UnitKind::from_mnemonic(&n.kind)
                .ok_or_else(|| GraphJsonError::UnknownKind(n.kind.clone()))?;
            let function = match &n.function {
                Some(f) => {
                    Some(InstrumentFunction::parse(f).ok_or_else(|| GraphJsonError::UnknownFunction(f.clone()))?)
                }
                None => None,
            };
            g.add_node_with_id(NodeId(n.id), kind, function)?;
        }
        for e in &doc.edges {
            let tag = match &e.tag {
                Some(t) => Some(EdgeTag::parse(t).ok_or_else(|| GraphJsonError::UnknownTag(t.clone()))?),
                None => None,
            };
            g.add_edge(NodeId(e.src), NodeId(e.dst), tag)?;
        }
        Ok(g)
    }
}

/// Graph exchange document. Edge kinds are omitted because they are derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: u32,
    pub kind: String,
    pub function: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub src: u32,
    pub dst: u32,
    pub tag: Option<String>,
}

#[derive(Debug, Error)]
pub enum GraphJsonError {
    #[error("unknown unit kind {0:?}")]
    UnknownKind(String),
    #[error("unknown controller function {0:?}")]
    UnknownFunction(String),
    #[error("unknown edge tag {0:?}")]
    UnknownTag(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use UnitKind::*;

    #[test]
    fn first_node_gets_id_zero() {
        let mut g = FlowsheetGraph::new();
        assert_eq!(g.add_unit(RawFeed).unwrap(), NodeId(0));
        assert_eq!(g.node_count(), 1);
    }

    #[test]
    fn function_must_match_kind() {
        let mut g = FlowsheetGraph::new();
        assert_eq!(g.add_node(Instrument, None), Err(GraphError::MissingFunction));
        assert_eq!(
            g.add_node(Pump, Some(InstrumentFunction::TC)),
            Err(GraphError::UnexpectedFunction(Pump))
        );
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn edge_kinds_are_derived() {
        let mut g = FlowsheetGraph::new();
        let raw = g.add_unit(RawFeed).unwrap();
        let hex = g.add_unit(HeatExchanger).unwrap();
        let r = g.add_unit(Reactor).unwrap();
        let pc = g.add_instrument(InstrumentFunction::PC);
        let e1 = g.add_edge(raw, hex, None).unwrap();
        let e2 = g.add_edge(r, pc, None).unwrap();
        assert_eq!(g.edge(e1).unwrap().kind, EdgeKind::Stream);
        assert_eq!(g.edge(e2).unwrap().kind, EdgeKind::Signal);
    }

    #[test]
    fn edge_kind_derivation_is_total() {
        for a in UnitKind::ALL {
            for b in UnitKind::ALL {
                let expected = if a == Instrument || b == Instrument { EdgeKind::Signal } else { EdgeKind::Stream };
                assert_eq!(derive_edge_kind(a, b), expected);
            }
        }
    }

    #[test]
    fn column_tags() {
        let mut g = FlowsheetGraph::new();
        let d = g.add_unit(Column).unwrap();
        let p = g.add_unit(Product).unwrap();
        let v = g.add_unit(Valve).unwrap();
        let e = g.add_edge(d, p, Some(EdgeTag::Tout)).unwrap();
        assert_eq!(g.edge(e).unwrap().tag, Some(EdgeTag::Tout));
        assert!(matches!(g.add_edge(v, p, Some(EdgeTag::Tout)), Err(GraphError::IllegalTag { .. })));
        assert!(matches!(g.add_edge(d, p, Some(EdgeTag::P1)), Err(GraphError::IllegalTag { .. })));
    }

    #[test]
    fn add_edge_errors() {
        let mut g = FlowsheetGraph::new();
        let raw = g.add_unit(RawFeed).unwrap();
        let prod = g.add_unit(Product).unwrap();
        let pp = g.add_unit(Pump).unwrap();
        let tc = g.add_instrument(InstrumentFunction::TC);
        assert_eq!(g.add_edge(pp, raw, None), Err(GraphError::StreamIntoRawFeed(raw)));
        assert_eq!(g.add_edge(prod, pp, None), Err(GraphError::StreamOutOfProduct(prod)));
        assert_eq!(g.add_edge(pp, pp, None), Err(GraphError::SelfLoop(pp)));
        assert_eq!(g.add_edge(pp, NodeId(99), None), Err(GraphError::UnknownNode(NodeId(99))));
        // signal edges may touch raw/prod
        assert!(g.add_edge(tc, raw, None).is_ok());
        assert!(matches!(g.add_edge(pp, tc, Some(EdgeTag::P1)), Err(GraphError::IllegalTag { .. })));
    }

    #[test]
    fn validate_linear_chain() {
        let mut g = FlowsheetGraph::new();
        let raw = g.add_unit(RawFeed).unwrap();
        let r = g.add_unit(Reactor).unwrap();
        let prod = g.add_unit(Product).unwrap();
        g.add_edge(raw, r, None).unwrap();
        g.add_edge(r, prod, None).unwrap();
        assert!(g.validate_structure().is_empty());
    }

    #[test]
    fn validate_flags_edge_into_raw_after_retype() {
        let mut g = FlowsheetGraph::new();
        let raw = g.add_unit(RawFeed).unwrap();
        let m = g.add_unit(Mixer).unwrap();
        let e = g.add_edge(raw, m, None).unwrap();
        g.retype_node(m, RawFeed, None).unwrap();
        assert_eq!(g.validate_structure(), vec![Violation::StreamIntoRawFeed { edge: e.0 }]);
    }

    #[test]
    fn validate_flags_unpaired_pass() {
        let mut g = FlowsheetGraph::new();
        let raw = g.add_unit(RawFeed).unwrap();
        let hex = g.add_unit(HeatExchanger).unwrap();
        let prod = g.add_unit(Product).unwrap();
        g.add_edge(raw, hex, Some(EdgeTag::P1)).unwrap();
        g.add_edge(hex, prod, Some(EdgeTag::P2)).unwrap();
        let v = g.validate_structure();
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v.iter().all(|x| matches!(x, Violation::PassPairing { .. })));
    }

    #[test]
    fn json_round_trip() {
        let mut g = FlowsheetGraph::new();
        let raw = g.add_unit(RawFeed).unwrap();
        let d = g.add_unit(Column).unwrap();
        let lc = g.add_instrument(InstrumentFunction::LC);
        g.add_edge(raw, d, None).unwrap();
        g.add_edge(d, lc, None).unwrap();
        let text = serde_json::to_string(&g.to_json()).unwrap();
        assert!(text.contains(r#""function":"LC""#));
        let back = FlowsheetGraph::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges(), g.edges());
    }
}
