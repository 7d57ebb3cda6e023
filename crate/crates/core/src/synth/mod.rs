//! Synthetic corpus of (erroneous, correct) flowsheet pairs.

pub mod catalog;
pub mod corpus;
pub mod edit;
pub mod generate;

pub use catalog::{build_catalog, ErrorClass, ErrorVariant, Family, Pattern};
pub use corpus::{
    generate_corpus, generate_sample, read_corpus, read_manifest, read_split, write_corpus, write_split, Corpus, CorpusError, FlowsheetPair,
    Manifest,
};
pub use generate::{assemble_chain, corrupt, inject_errors, sample_flowsheet, variant_label, Assembled, GenConfig, GenError, Instance};

use crate::graph::FlowsheetGraph;

/// The case-study process: feed, reactor with pressure control, heater with a
/// temperature/flow cascade, then a column with bottoms level control.
/// Returns the correct flowsheet and the version with the reactor's pressure
/// controller and the heater's temperature controller missing.
pub fn case_study(catalog: &[Pattern]) -> (FlowsheetGraph, FlowsheetGraph) {
    let a = generate::assemble_chain(catalog, &["R1", "H1", "D1"]).expect("catalog has R1, H1, D1");
    let variant = |inst: usize, id: &str| {
        let p = &catalog[a.instances[inst].pattern];
        (inst, p.variants.iter().position(|v| v.id == id).expect("variant exists"))
    };
    let broken = generate::corrupt(&a, catalog, &[variant(0, "remove-PC"), variant(1, "remove-TC")])
        .expect("case-study corruption is serializable");
    (a.graph, broken)
}
