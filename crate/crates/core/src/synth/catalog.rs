//! The 27 flowsheet patterns and their error variants.
//!
//! Templates are written as edge chains over named nodes. A node's kind is
//! read from its name prefix (`raw_s` is a raw feed, `FC2` a flow
//! controller); `a>b@p2` is an edge a→b carrying tag p2.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::graph::{EdgeTag, FlowsheetGraph, InstrumentFunction, NodeId, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Family {
    Mixer,
    HeatExchanger,
    Pump,
    Compressor,
    Storage,
    ReactantAddition,
    Reactor,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ErrorClass {
    MissingComponent,
    MissingSubsystem,
    MisplacedComponent,
    WrongStreamConnection,
    WrongSignalConnection,
    SwappedTags,
    WrongUnitType,
}

/// One edit over template node names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    /// Remove a node and reconnect its stream predecessor to its successor
    /// (per pass for multi-pass exchangers).
    RemoveSplice(&'static str),
    /// Remove a node together with all incident edges.
    RemoveNode(&'static str),
    RemoveEdge(&'static str, &'static str),
    /// Point edge `src→dst` at `to` instead.
    Retarget { src: &'static str, dst: &'static str, to: &'static str },
    /// Let edge `src→dst` start at `from` instead.
    Reroute { src: &'static str, dst: &'static str, from: &'static str },
    Retype(&'static str, UnitKind),
    /// Exchange the tout/bout tags on a column's outlets.
    SwapTags(&'static str),
    /// Splice `node` out and re-insert it on the stream feeding `before`.
    MoveBefore { node: &'static str, before: &'static str },
}

#[derive(Debug, Clone)]
pub struct ErrorVariant {
    pub id: &'static str,
    pub class: ErrorClass,
    pub edits: Vec<Edit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Port {
    pub node: NodeId,
    pub tag: Option<EdgeTag>,
}

#[derive(Debug, Clone)]
pub struct Pattern {
    pub id: &'static str,
    pub family: Family,
    pub template: FlowsheetGraph,
    pub names: BTreeMap<&'static str, NodeId>,
    pub inlet: Port,
    pub outlet: Port,
    pub variants: Vec<ErrorVariant>,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:?}, {} variants)", self.id, self.family, self.variants.len())
    }
}

impl Pattern {
    /// Template with a raw feed on the inlet and a product on the outlet.
    pub fn closed(&self) -> (FlowsheetGraph, BTreeMap<&'static str, NodeId>) {
        let mut g = self.template.clone();
        let raw = g.add_unit(UnitKind::RawFeed).unwrap();
        let prod = g.add_unit(UnitKind::Product).unwrap();
        g.add_edge(raw, self.inlet.node, self.inlet.tag).unwrap();
        g.add_edge(self.outlet.node, prod, self.outlet.tag).unwrap();
        (g, self.names.clone())
    }
}

fn kind_of(name: &str) -> (UnitKind, Option<InstrumentFunction>) {
    let prefix: String = name.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    if let Some(f) = InstrumentFunction::parse(&prefix) {
        return (UnitKind::Instrument, Some(f));
    }
    let k = UnitKind::from_mnemonic(&prefix).unwrap_or_else(|| panic!("bad template node name {name}"));
    (k, None)
}

fn split_tag(s: &'static str) -> (&'static str, Option<EdgeTag>) {
    match s.split_once('@') {
        Some((n, t)) => (n, Some(EdgeTag::parse(t).unwrap_or_else(|| panic!("bad tag in {s}")))),
        None => (s, None),
    }
}

struct Builder {
    g: FlowsheetGraph,
    names: BTreeMap<&'static str, NodeId>,
}

impl Builder {
    fn node(&mut self, name: &'static str) -> NodeId {
        if let Some(&id) = self.names.get(name) {
            return id;
        }
        let (k, f) = kind_of(name);
        let id = self.g.add_node(k, f).unwrap();
        self.names.insert(name, id);
        id
    }

    fn chains(&mut self, spec: &'static str) {
        for chain in spec.split_whitespace() {
            let mut hops = chain.split('>');
            let mut prev = self.node(hops.next().unwrap());
            for hop in hops {
                let (name, tag) = split_tag(hop);
                let next = self.node(name);
                self.g.add_edge(prev, next, tag).unwrap_or_else(|e| panic!("{chain}: {e}"));
                prev = next;
            }
        }
    }
}

fn edit(spec: &'static str) -> Edit {
    let words: Vec<&'static str> = spec.split_whitespace().collect();
    let edge = |s: &'static str| s.split_once('>').unwrap_or_else(|| panic!("bad edge in {spec}"));
    match words.as_slice() {
        ["splice", n] => Edit::RemoveSplice(n),
        ["drop", n] => Edit::RemoveNode(n),
        ["cut", e] => {
            let (a, b) = edge(e);
            Edit::RemoveEdge(a, b)
        }
        ["retarget", e, to] => {
            let (src, dst) = edge(e);
            Edit::Retarget { src, dst, to }
        }
        ["reroute", e, from] => {
            let (src, dst) = edge(e);
            Edit::Reroute { src, dst, from }
        }
        ["retype", n, k] => Edit::Retype(n, UnitKind::from_mnemonic(k).expect("bad kind")),
        ["swap", n] => Edit::SwapTags(n),
        ["move", n, before] => Edit::MoveBefore { node: n, before },
        _ => panic!("bad edit {spec}"),
    }
}

fn pattern(
    id: &'static str,
    family: Family,
    chains: &'static str,
    inlet: &'static str,
    outlet: &'static str,
    variants: &[(&'static str, ErrorClass, &'static str)],
) -> Pattern {
    let mut b = Builder { g: FlowsheetGraph::new(), names: BTreeMap::new() };
    b.chains(chains);
    let port = |b: &mut Builder, s: &'static str| {
        let (n, tag) = split_tag(s);
        Port { node: b.node(n), tag }
    };
    let inlet = port(&mut b, inlet);
    let outlet = port(&mut b, outlet);
    let variants = variants
        .iter()
        .map(|&(vid, class, edits)| ErrorVariant { id: vid, class, edits: edits.split(';').map(|s| edit(s.trim())).collect() })
        .collect();
    Pattern { id, family, template: b.g, names: b.names, inlet, outlet, variants }
}

/// Builds the static catalog.
pub fn build_catalog() -> Vec<Pattern> {
    use ErrorClass::*;
    use Family::*;
    vec![
        pattern("M1", Mixer, "raw2>mix", "mix", "mix", &[
            ("remove-feed", MissingComponent, "drop raw2"),
            ("disconnect-feed", WrongStreamConnection, "cut raw2>mix"),
            ("mix-as-tank", WrongUnitType, "retype mix tank"),
        ]),
        pattern("M2", Mixer, "raw2>v>mix v>FC>v", "mix", "mix", &[
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop FC; splice v"),
            ("FC-measures-mixer", WrongSignalConnection, "reroute v>FC mix"),
            ("mix-as-tank", WrongUnitType, "retype mix tank"),
        ]),
        pattern("H1", HeatExchanger, "raw_s>v>hex@p2>prod_s@p2 hex>TC>FC>v", "hex@p1", "hex@p1", &[
            ("remove-TC", MissingComponent, "drop TC"),
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop TC; drop FC; splice v"),
            ("TC-actuates-valve", WrongSignalConnection, "retarget TC>FC v"),
            ("TC-measures-valve", WrongSignalConnection, "reroute hex>TC v"),
        ]),
        pattern("H2", HeatExchanger, "raw_s>v>hex@p2>prod_s@p2 hex>TC>v", "hex@p1", "hex@p1", &[
            ("remove-TC", MissingComponent, "drop TC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop TC; splice v"),
            ("TC-measures-valve", WrongSignalConnection, "reroute hex>TC v"),
        ]),
        pattern("H3", HeatExchanger, "raw_s>hex@p2>prod_s@p2", "hex@p1", "hex@p1", &[
            ("remove-exchanger", MissingComponent, "splice hex"),
            ("remove-service-stream", MissingSubsystem, "drop raw_s; drop prod_s"),
        ]),
        pattern("H4", HeatExchanger, "splt>hex>mix splt>v>mix mix>TC>v", "splt", "mix", &[
            ("remove-TC", MissingComponent, "drop TC"),
            ("remove-bypass-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop TC; splice v"),
            ("TC-measures-exchanger", WrongSignalConnection, "reroute mix>TC hex"),
            ("bypass-into-exchanger", WrongStreamConnection, "retarget v>mix hex"),
        ]),
        pattern("P1", Pump, "pp>v pp>FC>v", "pp", "v", &[
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop FC; splice v"),
            ("FC-measures-valve", WrongSignalConnection, "reroute pp>FC v"),
        ]),
        pattern("P2", Pump, "mix>pp>splt>v>mix pp>FC>v", "mix", "splt", &[
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop FC; splice v"),
            ("FC-measures-splitter", WrongSignalConnection, "reroute pp>FC splt"),
            ("recycle-into-pump", WrongStreamConnection, "retarget v>mix pp"),
        ]),
        pattern("P3", Pump, "v>tank>pp tank>LC>v", "v", "pp", &[
            ("remove-LC", MissingComponent, "drop LC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop LC; splice v"),
            ("LC-measures-pump", WrongSignalConnection, "reroute tank>LC pp"),
        ]),
        pattern("C1", Compressor, "comp>v comp>PC>v", "comp", "v", &[
            ("remove-PC", MissingComponent, "drop PC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop PC; splice v"),
            ("PC-measures-valve", WrongSignalConnection, "reroute comp>PC v"),
        ]),
        pattern("C2", Compressor, "mix>comp>splt>v>mix comp>FC>v", "mix", "splt", &[
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop FC; splice v"),
            ("FC-measures-splitter", WrongSignalConnection, "reroute comp>FC splt"),
            ("recycle-into-compressor", WrongStreamConnection, "retarget v>mix comp"),
        ]),
        pattern("C3", Compressor, "comp1>hex>comp2", "comp1", "comp2", &[
            ("remove-intercooler", MissingComponent, "splice hex"),
            ("remove-second-stage", MissingComponent, "splice comp2"),
            ("first-stage-as-pump", WrongUnitType, "retype comp1 pp"),
            ("second-stage-as-pump", WrongUnitType, "retype comp2 pp"),
        ]),
        pattern("S1", Storage, "tank>v tank>LC>v", "tank", "v", &[
            ("remove-LC", MissingComponent, "drop LC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop LC; splice v"),
            ("LC-measures-valve", WrongSignalConnection, "reroute tank>LC v"),
        ]),
        pattern("S2", Storage, "v>tank tank>LC>v", "v", "tank", &[
            ("remove-LC", MissingComponent, "drop LC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop LC; splice v"),
            ("LC-measures-valve", WrongSignalConnection, "reroute tank>LC v"),
        ]),
        pattern("S3", Storage, "tank", "tank", "tank", &[
            ("tank-as-mix", WrongUnitType, "retype tank mix"),
        ]),
        pattern("A1", ReactantAddition, "raw2>v>mix raw2>FC>v", "mix", "mix", &[
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop FC; splice v"),
            ("FC-measures-mixer", WrongSignalConnection, "reroute raw2>FC mix"),
        ]),
        pattern("A2", ReactantAddition, "raw2>pp>mix", "mix", "mix", &[
            ("remove-pump", MissingComponent, "splice pp"),
            ("remove-feed-line", MissingSubsystem, "drop raw2; drop pp"),
            ("pump-as-compressor", WrongUnitType, "retype pp comp"),
        ]),
        pattern("A3", ReactantAddition, "raw2>v>mix mix>FC1>FC2>v", "mix", "mix", &[
            ("remove-ratio-FC", MissingComponent, "drop FC1"),
            ("remove-flow-FC", MissingComponent, "drop FC2"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop FC1; drop FC2; splice v"),
            ("ratio-FC-actuates-valve", WrongSignalConnection, "retarget FC1>FC2 v"),
        ]),
        pattern("R1", Reactor, "r>v r>PC>v", "r", "v", &[
            ("remove-PC", MissingComponent, "drop PC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop PC; splice v"),
            ("PC-measures-valve", WrongSignalConnection, "reroute r>PC v"),
            ("valve-before-reactor", MisplacedComponent, "move v r"),
        ]),
        pattern("R2", Reactor, "r>hex@p1 raw_s>v>hex@p2>prod_s@p2 r>TC>FC>v", "r", "hex@p1", &[
            ("remove-TC", MissingComponent, "drop TC"),
            ("remove-FC", MissingComponent, "drop FC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop TC; drop FC; splice v"),
            ("TC-actuates-valve", WrongSignalConnection, "retarget TC>FC v"),
            ("TC-measures-jacket", WrongSignalConnection, "reroute r>TC hex"),
        ]),
        pattern("R3", Reactor, "r>v r>LC>v", "r", "v", &[
            ("remove-LC", MissingComponent, "drop LC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop LC; splice v"),
            ("LC-measures-valve", WrongSignalConnection, "reroute r>LC v"),
        ]),
        pattern("R4", Reactor, "mix>r>splt>mix", "mix", "splt", &[
            ("recycle-into-reactor", WrongStreamConnection, "retarget splt>mix r"),
            ("remove-recycle", MissingComponent, "cut splt>mix"),
            ("mix-as-tank", WrongUnitType, "retype mix tank"),
            ("remove-reactor", MissingComponent, "splice r"),
        ]),
        pattern("D1", Column, "dist>prod_t@tout dist>v@bout dist>LC>v", "dist", "v", &[
            ("remove-LC", MissingComponent, "drop LC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop LC; splice v"),
            ("LC-measures-valve", WrongSignalConnection, "reroute dist>LC v"),
            ("swapped-outlets", SwappedTags, "swap dist"),
        ]),
        pattern("D2", Column, "dist>prod_b@bout dist>v@tout dist>PC>v", "dist", "v", &[
            ("remove-PC", MissingComponent, "drop PC"),
            ("remove-valve", MissingComponent, "splice v"),
            ("remove-loop", MissingSubsystem, "drop PC; splice v"),
            ("PC-measures-valve", WrongSignalConnection, "reroute dist>PC v"),
            ("swapped-outlets", SwappedTags, "swap dist"),
        ]),
        pattern(
            "D3",
            Column,
            "hex>dist@p1 raw_s>v>hex@p2>prod_s@p2 dist>prod_t@tout dist>pp@bout hex>TC>FC>v",
            "hex@p1",
            "pp",
            &[
                ("remove-TC", MissingComponent, "drop TC"),
                ("remove-FC", MissingComponent, "drop FC"),
                ("remove-valve", MissingComponent, "splice v"),
                ("remove-loop", MissingSubsystem, "drop TC; drop FC; splice v"),
                ("TC-actuates-valve", WrongSignalConnection, "retarget TC>FC v"),
                ("TC-measures-column", WrongSignalConnection, "reroute hex>TC dist"),
            ],
        ),
        pattern("D4", Column, "mix>dist dist>splt@tout splt>mix dist>prod_b@bout", "mix", "splt", &[
            ("reflux-into-column", WrongStreamConnection, "retarget splt>mix dist"),
            ("remove-reflux", MissingComponent, "cut splt>mix"),
            ("mix-as-tank", WrongUnitType, "retype mix tank"),
            ("swapped-outlets", SwappedTags, "swap dist"),
        ]),
        pattern("D5", Column, "dist>v1@tout v1>prod_t dist>v2@bout dist>LC>v2 dist>PC>v1", "dist", "v2", &[
            ("remove-LC", MissingComponent, "drop LC"),
            ("remove-PC", MissingComponent, "drop PC"),
            ("remove-tops-valve", MissingComponent, "splice v1"),
            ("remove-bottoms-valve", MissingComponent, "splice v2"),
            ("remove-control", MissingSubsystem, "drop LC; drop PC; splice v1; splice v2"),
            ("swapped-outlets", SwappedTags, "swap dist"),
        ]),
    ]
}
