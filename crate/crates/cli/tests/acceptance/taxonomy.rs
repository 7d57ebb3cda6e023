use std::collections::BTreeMap;

use fsac_core::codec::serialize_canonical;
use fsac_core::eval::{classify_failure, FailureClass, PredictionRecord, EXACT_LIMIT};
use fsac_core::graph::{EdgeId, EdgeKind, FlowsheetGraph, UnitKind};
use fsac_core::synth::edit::apply_edits;
use fsac_core::synth::{assemble_chain, build_catalog, corrupt};

use crate::verdict;

fn canon(g: &FlowsheetGraph) -> String {
    serialize_canonical(g).unwrap()
}

/// Puts a valve on the first stream leaving a raw feed.
fn with_spurious_valve(g: &FlowsheetGraph) -> FlowsheetGraph {
    let mut h = g.clone();
    let (id, e) = h
        .edges()
        .iter()
        .enumerate()
        .find(|(_, e)| e.kind == EdgeKind::Stream && h.kind(e.src) == Some(UnitKind::RawFeed))
        .map(|(i, e)| (i, e.clone()))
        .unwrap();
    h.remove_edge(EdgeId(id)).unwrap();
    let v = h.add_unit(UnitKind::Valve).unwrap();
    h.add_edge(e.src, v, None).unwrap();
    h.add_edge(v, e.dst, e.tag).unwrap();
    h
}

fn fixtures() -> Vec<(PredictionRecord, FailureClass)> {
    use FailureClass::*;
    let cat = build_catalog();
    let mut pairs = Vec::new();
    for p in &cat {
        let (t, names) = p.closed();
        for v in p.variants.iter().skip(1).step_by(2) {
            let mut s = t.clone();
            apply_edits(&mut s, &names, &v.edits).unwrap();
            pairs.push((s, t.clone()));
        }
    }
    pairs.retain(|(s, t)| s.node_count() <= 12 && t.node_count() <= 12);
    let rec = |s: &FlowsheetGraph, t: &FlowsheetGraph, h: &str| PredictionRecord::new(canon(s), canon(t), &[h]);
    let mut out = Vec::new();

    // Broken notation: lexical, bracket, connection-pairing and tag errors.
    let invalid = [
        "(raw)(r",
        "(raw)(mix)<3(prod)",
        "(raw)[(r)(prod)",
        "(raw)(splt)(prod)]]",
        "(raw)(C)(r)(prod)",
        "(raw)(r)_2(prod)",
        "(raw)(pp)4(prod)",
        "(raw)(r)(prod)#",
        "()",
        "(raw)(hex){4}(prod)",
        "(raw){bout}(prod)",
    ];
    for (h, (s, t)) in invalid.iter().zip(&pairs) {
        out.push((rec(s, t, h), Invalid));
    }
    for (s, t) in pairs.iter().step_by(3).take(11) {
        out.push((rec(s, t, &canon(s)), Uncorrected));
    }
    for (s, t) in pairs.iter().skip(1).step_by(3).take(11) {
        out.push((rec(s, t, &canon(&with_spurious_valve(t))), NewErrors));
    }
    for (s, t) in pairs.iter().skip(2).step_by(3).take(11) {
        out.push((rec(t, t, &canon(s)), Other));
    }
    // One of two errors repaired.
    for (i, p) in cat.iter().enumerate() {
        let q = &cat[(i * 5 + 2) % cat.len()];
        let Ok(a) = assemble_chain(&cat, &[p.id, q.id]) else { continue };
        if a.graph.node_count() > EXACT_LIMIT {
            continue;
        }
        let (v, w) = ((i + 1) % p.variants.len(), i % q.variants.len());
        let (Some(s), Some(h)) = (corrupt(&a, &cat, &[(0, v), (1, w)]), corrupt(&a, &cat, &[(0, v)])) else { continue };
        let (sc, hc, tc) = (canon(&s), canon(&h), canon(&a.graph));
        if sc != hc && hc != tc && out.iter().filter(|f| f.1 == PartialCorrection).count() < 11 {
            out.push((PredictionRecord::new(sc, tc, &[hc.as_str()]), PartialCorrection));
        }
    }
    out
}

#[test]
fn criterion_10_failure_taxonomy() {
    let fx = fixtures();
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (r, intended) in &fx {
        let e = per_class.entry(format!("{intended:?}")).or_default();
        e.0 += 1;
        e.1 += (classify_failure(r) == Ok(*intended)) as usize;
    }
    let right: usize = per_class.values().map(|c| c.1).sum();
    let detail = format!(
        "{right}/{} fixtures classified as intended; {}",
        fx.len(),
        per_class.iter().map(|(k, (n, ok))| format!("{k} {ok}/{n}")).collect::<Vec<_>>().join(", ")
    );
    let pass = fx.len() >= 50 && per_class.len() == 5 && per_class.values().all(|c| c.0 >= 10) && right == fx.len();
    verdict(10, "failure taxonomy", pass, &detail);
}
