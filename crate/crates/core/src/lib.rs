//! Flowsheet graphs, the string codec, synthetic error corpora and evaluation
//! metrics for flowsheet autocorrection.

pub mod codec;
pub mod eval;
pub mod graph;
pub mod lint;
pub mod synth;

pub use graph::{EdgeKind, EdgeTag, FlowsheetGraph, InstrumentFunction, NodeId, UnitKind};
