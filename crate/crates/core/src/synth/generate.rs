//! Monte Carlo flowsheet assembly and error injection.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{Pattern, Port};
use super::edit::{apply_edits, joined_tag};
use crate::codec::{serialize_canonical, SerializeError};
use crate::graph::{FlowsheetGraph, NodeId, UnitKind};
use crate::lint::lint_wellformed;

/// Assembly attempts before giving up on a sample.
pub const MAX_ASSEMBLY_ATTEMPTS: usize = 100;
const MAX_INJECTION_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_pairs: usize,
    pub seed: u64,
    pub erroneous_fraction: f64,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub patterns_min: usize,
    pub patterns_max: usize,
    pub branch_probability: f64,
    pub recycle_probability: f64,
    pub two_error_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_pairs: 20_000,
            seed: 0,
            erroneous_fraction: 0.4,
            split: [0.8, 0.1, 0.1],
            patterns_min: 3,
            patterns_max: 8,
            branch_probability: 0.2,
            recycle_probability: 0.15,
            two_error_probability: 0.2,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("no flowsheet within the connection caps after {0} attempts")]
    CapExceeded(usize),
    #[error("could not corrupt flowsheet after {0} attempts")]
    NoCorruption(usize),
    #[error("sample {idx} stays a duplicate after {attempts} regenerations")]
    Uniqueness { idx: usize, attempts: u32 },
    #[error("unknown pattern {0}")]
    UnknownPattern(String),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let probs = [
            ("erroneous_fraction", self.erroneous_fraction),
            ("branch_probability", self.branch_probability),
            ("recycle_probability", self.recycle_probability),
            ("two_error_probability", self.two_error_probability),
        ];
        for (name, p) in probs.into_iter().chain(self.split.iter().map(|&s| ("split", s))) {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenError::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GenError::Config(format!("split {:?} does not sum to 1", self.split)));
        }
        if self.patterns_min == 0 || self.patterns_min > self.patterns_max {
            return Err(GenError::Config(format!(
                "patterns per flowsheet {}..{} is empty",
                self.patterns_min, self.patterns_max
            )));
        }
        Ok(())
    }
}

/// A placed pattern: catalog index plus template names bound to graph nodes.
#[derive(Debug, Clone)]
pub struct Instance {
    pub pattern: usize,
    pub names: BTreeMap<&'static str, NodeId>,
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub graph: FlowsheetGraph,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone)]
struct Chain {
    outlet: Port,
    /// Inter-pattern stream edges upstream of the outlet.
    junctions: Vec<(NodeId, NodeId)>,
}

fn connect(g: &mut FlowsheetGraph, from: Port, to: Port) {
    let tag = joined_tag(g, from.node, from.tag, to.node, to.tag);
    g.add_edge(from.node, to.node, tag).expect("ports accept streams");
}

fn append(g: &mut FlowsheetGraph, chain: &mut Chain, catalog: &[Pattern], p: usize) -> Instance {
    let pat = &catalog[p];
    let map = g.absorb(&pat.template);
    let inlet = Port { node: map[&pat.inlet.node], tag: pat.inlet.tag };
    connect(g, chain.outlet, inlet);
    chain.junctions.push((chain.outlet.node, inlet.node));
    chain.outlet = Port { node: map[&pat.outlet.node], tag: pat.outlet.tag };
    Instance { pattern: p, names: pat.names.iter().map(|(&n, id)| (n, map[id])).collect() }
}

fn add_splitter(g: &mut FlowsheetGraph, chain: &mut Chain) -> NodeId {
    let s = g.add_unit(UnitKind::Splitter).unwrap();
    connect(g, chain.outlet, Port { node: s, tag: None });
    chain.junctions.push((chain.outlet.node, s));
    chain.outlet = Port { node: s, tag: None };
    s
}

/// Routes a new splitter branch back into a mixer inserted on an upstream
/// junction. No-op if the chain has no junction left to recycle into.
fn add_recycle(g: &mut FlowsheetGraph, chain: &mut Chain, rng: &mut ChaCha8Rng) {
    if chain.junctions.is_empty() {
        return;
    }
    let j = rng.gen_range(0..chain.junctions.len());
    let (a, b) = chain.junctions[j];
    let Some(edge) = g.find_edge(a, b) else { return };
    let old = g.remove_edge(edge).unwrap();
    let mix = g.add_unit(UnitKind::Mixer).unwrap();
    let in_tag = joined_tag(g, a, old.tag, mix, None);
    g.add_edge(a, mix, in_tag).unwrap();
    let out_tag = joined_tag(g, mix, None, b, old.tag);
    g.add_edge(mix, b, out_tag).unwrap();
    chain.junctions.splice(j..=j, [(a, mix), (mix, b)]);
    let s = add_splitter(g, chain);
    g.add_edge(s, mix, None).unwrap();
}

fn terminate(g: &mut FlowsheetGraph, chains: &[Chain]) {
    for c in chains {
        let prod = g.add_unit(UnitKind::Product).unwrap();
        connect(g, c.outlet, Port { node: prod, tag: None });
    }
}

fn try_assemble(rng: &mut ChaCha8Rng, cfg: &GenConfig, catalog: &[Pattern]) -> Assembled {
    let mut g = FlowsheetGraph::new();
    let raw = g.add_unit(UnitKind::RawFeed).unwrap();
    let mut chains = vec![Chain { outlet: Port { node: raw, tag: None }, junctions: Vec::new() }];
    let mut instances = Vec::new();
    let k = rng.gen_range(cfg.patterns_min..=cfg.patterns_max);
    for _ in 0..k {
        let c = rng.gen_range(0..chains.len());
        let p = rng.gen_range(0..catalog.len());
        instances.push(append(&mut g, &mut chains[c], catalog, p));
        if rng.gen_bool(cfg.recycle_probability) {
            add_recycle(&mut g, &mut chains[c], rng);
        }
        if rng.gen_bool(cfg.branch_probability) {
            add_splitter(&mut g, &mut chains[c]);
            let branch = chains[c].clone();
            chains.push(branch);
        }
    }
    terminate(&mut g, &chains);
    Assembled { graph: g, instances }
}

/// Draws a lint-clean flowsheet that fits the connection caps.
pub fn sample_flowsheet(rng: &mut ChaCha8Rng, cfg: &GenConfig, catalog: &[Pattern]) -> Result<Assembled, GenError> {
    for _ in 0..MAX_ASSEMBLY_ATTEMPTS {
        let a = try_assemble(rng, cfg, catalog);
        match serialize_canonical(&a.graph) {
            Ok(_) => {
                debug_assert!(lint_wellformed(&a.graph).is_empty(), "{:?}", lint_wellformed(&a.graph));
                return Ok(a);
            }
            Err(SerializeError::ConnectionCap { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(GenError::CapExceeded(MAX_ASSEMBLY_ATTEMPTS))
}

/// Chains the named patterns from a single raw feed to a single product.
pub fn assemble_chain(catalog: &[Pattern], ids: &[&str]) -> Result<Assembled, GenError> {
    let mut g = FlowsheetGraph::new();
    let raw = g.add_unit(UnitKind::RawFeed).unwrap();
    let mut chain = Chain { outlet: Port { node: raw, tag: None }, junctions: Vec::new() };
    let mut instances = Vec::new();
    for id in ids {
        let p = catalog.iter().position(|p| p.id == *id).ok_or_else(|| GenError::UnknownPattern(id.to_string()))?;
        instances.push(append(&mut g, &mut chain, catalog, p));
    }
    terminate(&mut g, std::slice::from_ref(&chain));
    Ok(Assembled { graph: g, instances })
}

/// Variant label used in corpus metadata.
pub fn variant_label(catalog: &[Pattern], pattern: usize, variant: usize) -> String {
    format!("{}/{}", catalog[pattern].id, catalog[pattern].variants[variant].id)
}

/// Applies one variant (instance, variant index) per entry and returns the
/// corrupted graph if it is still serializable.
pub fn corrupt(
    a: &Assembled,
    catalog: &[Pattern],
    choices: &[(usize, usize)],
) -> Option<FlowsheetGraph> {
    let mut g = a.graph.clone();
    for &(i, v) in choices {
        let inst = &a.instances[i];
        apply_edits(&mut g, &inst.names, &catalog[inst.pattern].variants[v].edits).ok()?;
    }
    serialize_canonical(&g).ok().map(|_| g)
}

/// Corrupts one instance, or two distinct ones with `two_error_probability`.
/// Retries until the result is serializable and differs from the input.
pub fn inject_errors(
    a: &Assembled,
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    catalog: &[Pattern],
) -> Result<(FlowsheetGraph, Vec<String>), GenError> {
    let target = serialize_canonical(&a.graph)?;
    for _ in 0..MAX_INJECTION_ATTEMPTS {
        let n = a.instances.len();
        let count = if n >= 2 && rng.gen_bool(cfg.two_error_probability) { 2 } else { 1 };
        let mut picked: Vec<usize> = sample(rng, n, count).into_vec();
        picked.sort_unstable();
        let choices: Vec<(usize, usize)> = picked
            .iter()
            .map(|&i| (i, rng.gen_range(0..catalog[a.instances[i].pattern].variants.len())))
            .collect();
        let Some(g) = corrupt(a, catalog, &choices) else { continue };
        if serialize_canonical(&g)? == target {
            continue;
        }
        let labels = choices.iter().map(|&(i, v)| variant_label(catalog, a.instances[i].pattern, v)).collect();
        return Ok((g, labels));
    }
    Err(GenError::NoCorruption(MAX_INJECTION_ATTEMPTS))
}
