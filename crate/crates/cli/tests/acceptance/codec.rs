use std::time::Instant;

use fsac_core::codec::oracle::canonical_oracle;
use fsac_core::codec::vocab::{decode, detokenize, encode, string_to_ids, tokenize, vocabulary, Token, UNK_ID, VOCAB_SIZE};
use fsac_core::codec::{parse, serialize_canonical, serialize_tokens, tokens_to_string};
use fsac_core::graph::{EdgeKind, FlowsheetGraph, NodeId};
use fsac_core::synth::edit::apply_edits;
use fsac_core::synth::{build_catalog, read_corpus, sample_flowsheet, GenConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{desk_data, verdict};

/// Edge label with pass numbers collapsed: pass numbering is a naming
/// choice of the serializer.
fn edge_class(g: &FlowsheetGraph, i: usize) -> (usize, usize, EdgeKind, Option<String>) {
    let e = &g.edges()[i];
    let pos = |id: NodeId| g.nodes().iter().position(|n| n.id == id).unwrap();
    let tag = e.tag.map(|t| if t.is_pass() { "pass".into() } else { t.as_str().to_string() });
    (pos(e.src), pos(e.dst), e.kind, tag)
}

/// Labeled directed-graph isomorphism by backtracking, independent of the
/// codec.
pub fn isomorphic(a: &FlowsheetGraph, b: &FlowsheetGraph) -> bool {
    let n = a.node_count();
    if n != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    type Adj = Vec<Vec<(usize, EdgeKind, Option<String>)>>;
    let adj = |g: &FlowsheetGraph| -> (Adj, Adj) {
        let (mut out, mut inc) = (vec![Vec::new(); n], vec![Vec::new(); n]);
        for i in 0..g.edge_count() {
            let (s, d, k, t) = edge_class(g, i);
            out[s].push((d, k, t.clone()));
            inc[d].push((s, k, t));
        }
        (out, inc)
    };
    let (ao, ai) = adj(a);
    let (bo, bi) = adj(b);
    let sig = |g: &FlowsheetGraph, o: &Adj, i: &Adj, v: usize| (g.nodes()[v].label(), o[v].len(), i[v].len());
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];

    fn go(
        v: usize,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        cand: &[Vec<usize>],
        ao: &Adj,
        bo: &Adj,
    ) -> bool {
        if v == map.len() {
            return true;
        }
        for &w in &cand[v] {
            if used[w] {
                continue;
            }
            // Edges between v and earlier nodes must agree in both directions.
            let ok = (0..v).all(|u| {
                let mu = map[u];
                let count = |adj: &Adj, x: usize, y: usize| {
                    let mut e: Vec<_> = adj[x].iter().filter(|t| t.0 == y).map(|t| (t.1, t.2.clone())).collect();
                    e.sort_by(|p, q| format!("{p:?}").cmp(&format!("{q:?}")));
                    e
                };
                count(ao, u, v) == count(bo, mu, w) && count(ao, v, u) == count(bo, w, mu)
            }) && count_self(ao, v) == count_self(bo, w);
            if ok {
                map[v] = w;
                used[w] = true;
                if go(v + 1, map, used, cand, ao, bo) {
                    return true;
                }
                used[w] = false;
            }
        }
        false
    }
    fn count_self(adj: &Adj, x: usize) -> usize {
        adj[x].iter().filter(|t| t.0 == x).count()
    }
    let cand: Vec<Vec<usize>> = (0..n).map(|v| (0..n).filter(|&w| sig(a, &ao, &ai, v) == sig(b, &bo, &bi, w)).collect()).collect();
    go(0, &mut map, &mut used, &cand, &ao, &bo)
}

#[test]
fn criterion_01_codec_round_trip() {
    let started = Instant::now();
    let catalog = build_catalog();
    let cfg = GenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut graph_fail = 0;
    for _ in 0..10_000 {
        let g = sample_flowsheet(&mut rng, &cfg, &catalog).unwrap().graph;
        let back = parse(&serialize_canonical(&g).unwrap()).unwrap();
        graph_fail += !isomorphic(&back, &g) as usize;
    }
    let corpus = read_corpus(&desk_data()).unwrap();
    let mut strings = 0;
    let mut string_fail = 0;
    for p in corpus.splits().into_iter().flatten() {
        for s in [&p.source, &p.target] {
            strings += 1;
            string_fail += (serialize_canonical(&parse(s).unwrap()).unwrap() != *s) as usize;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let detail = format!("graph failures {graph_fail}/10000, string failures {string_fail}/{strings}, {secs:.1} s (limit 60 s)");
    verdict(1, "codec round trip", graph_fail == 0 && string_fail == 0 && secs < 60.0, &detail);
}

fn shuffled(g: &FlowsheetGraph, seed: u64) -> FlowsheetGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..g.node_count() as u32 * 3).collect();
    ids.shuffle(&mut rng);
    let old: Vec<NodeId> = g.nodes().iter().map(|n| n.id).collect();
    let mut order: Vec<usize> = (0..g.edge_count()).collect();
    order.shuffle(&mut rng);
    g.relabeled(|id| NodeId(ids[old.iter().position(|&o| o == id).unwrap()]), &order)
}

#[test]
fn criterion_02_canonicalization() {
    let catalog = build_catalog();
    let mut graphs = Vec::new();
    for p in &catalog {
        let (t, names) = p.closed();
        for v in &p.variants {
            let mut s = t.clone();
            if apply_edits(&mut s, &names, &v.edits).is_ok() {
                graphs.push(s);
            }
        }
        graphs.push(t);
    }
    graphs.retain(|g| g.node_count() <= 6);
    let mut disagree = Vec::new();
    for g in &graphs {
        let fast = serialize_tokens(g).map(|t| tokens_to_string(&t));
        let slow = canonical_oracle(g).unwrap().map(|t| tokens_to_string(&t));
        if fast != slow {
            disagree.push(format!("{fast:?} vs {slow:?}"));
        }
    }
    let corpus = read_corpus(&desk_data()).unwrap();
    let mut perms = 0;
    let mut moved = 0;
    for (i, p) in corpus.test.iter().take(100).enumerate() {
        let g = parse(&p.target).unwrap();
        for k in 0..10 {
            perms += 1;
            moved += (serialize_canonical(&shuffled(&g, (i * 10 + k) as u64)).unwrap() != p.target) as usize;
        }
    }
    let detail = format!(
        "oracle disagreements {}/{} template graphs (<= 6 nodes), permutation changes {moved}/{perms}",
        disagree.len(),
        graphs.len()
    );
    verdict(2, "canonicalization", disagree.is_empty() && moved == 0 && perms == 1000 && graphs.len() >= 27, &detail);
}

#[test]
fn criterion_03_vocabulary() {
    let table = vocabulary();
    let dense = table.iter().enumerate().all(|(i, e)| e.id == i as u32 && e.token.id() == e.id);
    let ids: Vec<u32> = (0..VOCAB_SIZE as u32).collect();
    let tokens = decode(&ids).unwrap();
    let codec_ok = encode(&tokens) == ids;
    let printable: Vec<Token> = tokens.iter().copied().filter(|t| !t.is_special()).collect();
    let text = detokenize(&printable).unwrap();
    let lexed = tokenize(&text);
    let lex_ok = lexed[1..lexed.len() - 1] == printable[..] && detokenize(&lexed).unwrap() == text;
    let corpus = read_corpus(&desk_data()).unwrap();
    let mut unk = 0;
    let mut strings = 0;
    for p in corpus.splits().into_iter().flatten() {
        for s in [&p.source, &p.target] {
            strings += 1;
            unk += string_to_ids(s).iter().filter(|&&i| i == UNK_ID).count();
        }
    }
    let detail = format!("{} tokens, {unk} UNK over {strings} corpus strings, identities {}", table.len(), dense && codec_ok && lex_ok);
    verdict(3, "vocabulary", table.len() == 53 && VOCAB_SIZE == 53 && unk == 0 && dense && codec_ok && lex_ok, &detail);
}
