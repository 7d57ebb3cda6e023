use std::collections::BTreeMap;

use fsac_core::codec::{equivalent, parse, serialize_canonical};
use fsac_core::graph::{EdgeKind, UnitKind};
use fsac_core::lint::{lint_wellformed, LintRule};
use fsac_core::synth::corpus::{read_split, split, write_split};
use fsac_core::synth::edit::apply_edits;
use fsac_core::synth::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn catalog_shape() {
    let cat = build_catalog();
    assert_eq!(cat.len(), 27);
    let mut families: BTreeMap<Family, usize> = BTreeMap::new();
    for p in &cat {
        *families.entry(p.family).or_default() += 1;
        assert!((1..=9).contains(&p.variants.len()), "{p}");
    }
    use Family::*;
    let expected = [
        (Mixer, 2),
        (HeatExchanger, 4),
        (Pump, 3),
        (Compressor, 3),
        (Storage, 3),
        (ReactantAddition, 3),
        (Reactor, 4),
        (Column, 5),
    ];
    assert_eq!(families, expected.into_iter().collect());
    let counts: Vec<(&str, usize)> = cat.iter().map(|p| (p.id, p.variants.len())).collect();
    let table = [
        ("M1", 3), ("M2", 5), ("H1", 6), ("H2", 4), ("H3", 2), ("H4", 5), ("P1", 4), ("P2", 5), ("P3", 4),
        ("C1", 4), ("C2", 5), ("C3", 4), ("S1", 4), ("S2", 4), ("S3", 1), ("A1", 4), ("A2", 3), ("A3", 5),
        ("R1", 5), ("R2", 6), ("R3", 4), ("R4", 4), ("D1", 5), ("D2", 5), ("D3", 6), ("D4", 4), ("D5", 6),
    ];
    assert_eq!(counts, table);
}

#[test]
fn closed_templates_are_lint_clean() {
    for p in build_catalog() {
        let (g, _) = p.closed();
        assert!(lint_wellformed(&g).is_empty(), "{p}: {:?}", lint_wellformed(&g));
        serialize_canonical(&g).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
}

#[test]
fn every_variant_breaks_its_template() {
    for p in build_catalog() {
        let (g, names) = p.closed();
        for v in &p.variants {
            let mut h = g.clone();
            apply_edits(&mut h, &names, &v.edits).unwrap_or_else(|e| panic!("{}/{}: {e}", p.id, v.id));
            assert!(h.is_structurally_valid(), "{}/{}", p.id, v.id);
            serialize_canonical(&h).unwrap_or_else(|e| panic!("{}/{}: {e}", p.id, v.id));
            assert!(!equivalent(&g, &h), "{}/{} leaves the template unchanged", p.id, v.id);
        }
    }
}

#[test]
fn r1_remove_pc_drops_one_node_and_two_signal_edges() {
    let cat = build_catalog();
    let r1 = cat.iter().find(|p| p.id == "R1").unwrap();
    let v = r1.variants.iter().find(|v| v.id == "remove-PC").unwrap();
    let (g, names) = r1.closed();
    let mut h = g.clone();
    apply_edits(&mut h, &names, &v.edits).unwrap();
    let signals = |g: &fsac_core::FlowsheetGraph| g.edges().iter().filter(|e| e.kind == EdgeKind::Signal).count();
    assert_eq!(g.node_count() - h.node_count(), 1);
    assert_eq!(signals(&g) - signals(&h), 2);
    assert_eq!(g.edge_count() - h.edge_count(), 2);
}

#[test]
fn case_study_fixture() {
    let cat = build_catalog();
    let (target, broken) = case_study(&cat);
    assert!(lint_wellformed(&target).is_empty());
    let findings = lint_wellformed(&broken);
    let fc = broken
        .nodes()
        .iter()
        .find(|n| n.function == Some(fsac_core::InstrumentFunction::FC))
        .unwrap()
        .id;
    assert!(findings.iter().any(|f| f.node == fc && f.rule == LintRule::InstrumentMeasurement), "{findings:?}");
    let t = serialize_canonical(&target).unwrap();
    let b = serialize_canonical(&broken).unwrap();
    assert!(t.contains("{PC}") && t.contains("{TC}"));
    assert!(!b.contains("{PC}") && !b.contains("{TC}") && b.contains("{FC}"));
    assert_eq!(target.node_count() - broken.node_count(), 2);
}

fn count_kind(g: &fsac_core::FlowsheetGraph, k: UnitKind) -> usize {
    g.nodes().iter().filter(|n| n.kind == k).count()
}

#[test]
fn node_counts_stay_within_catalog_bounds() {
    let cat = build_catalog();
    let cfg = GenConfig::default();
    let sizes: Vec<usize> = cat.iter().map(|p| p.template.node_count()).collect();
    let (smallest, largest) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
    // raw + patterns + final product; each branch adds a splitter and a
    // product, each recycle a splitter and a mixer.
    let lo = 1 + cfg.patterns_min * smallest + 1;
    let hi = 1 + cfg.patterns_max * (largest + 4) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut seen_lo, mut seen_hi) = (usize::MAX, 0);
    for _ in 0..10_000 {
        let a = sample_flowsheet(&mut rng, &cfg, &cat).unwrap();
        let n = a.graph.node_count();
        let k = a.instances.len();
        let templates: usize = a.instances.iter().map(|i| sizes[i.pattern]).sum();
        assert!((cfg.patterns_min..=cfg.patterns_max).contains(&k));
        assert!(n >= 2 + templates && n <= 2 + templates + 4 * k, "{n} nodes for {k} patterns");
        seen_lo = seen_lo.min(n);
        seen_hi = seen_hi.max(n);
    }
    assert!(lo <= seen_lo && seen_hi <= hi, "{seen_lo}..{seen_hi} outside {lo}..{hi}");
}

#[test]
fn no_branching_gives_plain_chains() {
    let cat = build_catalog();
    let cfg = GenConfig { branch_probability: 0.0, recycle_probability: 0.0, ..GenConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let a = sample_flowsheet(&mut rng, &cfg, &cat).unwrap();
        let in_templates: usize =
            a.instances.iter().map(|i| count_kind(&cat[i.pattern].template, UnitKind::Splitter)).sum();
        assert_eq!(count_kind(&a.graph, UnitKind::Splitter), in_templates);
        let sizes: usize = a.instances.iter().map(|i| cat[i.pattern].template.node_count()).sum();
        assert_eq!(a.graph.node_count(), sizes + 2);
    }
}

#[test]
fn sampling_is_deterministic() {
    let cat = build_catalog();
    let cfg = GenConfig::default();
    for seed in 0..20 {
        let a = sample_flowsheet(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, &cat).unwrap();
        let b = sample_flowsheet(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, &cat).unwrap();
        assert_eq!(a.graph, b.graph);
    }
}

#[test]
fn injection_never_returns_an_equivalent_graph() {
    let cat = build_catalog();
    let cfg = GenConfig::default();
    let single = GenConfig { two_error_probability: 0.0, ..GenConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut doubles = 0;
    for trial in 0..10_000 {
        let a = sample_flowsheet(&mut rng, &cfg, &cat).unwrap();
        let c = if trial % 2 == 0 { &cfg } else { &single };
        let (g, errors) = inject_errors(&a, &mut rng, c, &cat).unwrap();
        assert!(g.is_structurally_valid());
        assert!(!equivalent(&a.graph, &g));
        if trial % 2 == 1 {
            assert_eq!(errors.len(), 1);
        }
        doubles += (errors.len() == 2) as usize;
    }
    // About 20% of the 5,000 unrestricted trials.
    assert!((800..1200).contains(&doubles), "{doubles}");
}

fn small_config(n: usize) -> GenConfig {
    GenConfig { n_pairs: n, seed: 7, ..GenConfig::default() }
}

#[test]
fn small_corpus_statistics() {
    let cfg = small_config(2_000);
    let c = generate_corpus(&cfg).unwrap();
    assert_eq!([c.train.len(), c.val.len(), c.test.len()], [1_600, 200, 200]);
    let m = c.manifest(&cfg);
    assert_eq!(m.total.erroneous, 800);
    for s in [&m.train, &m.val, &m.test] {
        assert!((s.erroneous_fraction - 0.4).abs() <= 0.02, "{s:?}");
    }
    let mut keys = std::collections::HashSet::new();
    for p in c.splits().into_iter().flatten() {
        assert!(keys.insert((p.source.clone(), p.target.clone())));
        assert_eq!(serialize_canonical(&parse(&p.target).unwrap()).unwrap(), p.target);
        assert_eq!(serialize_canonical(&parse(&p.source).unwrap()).unwrap(), p.source);
        assert!(lint_wellformed(&parse(&p.target).unwrap()).is_empty());
        if !p.is_erroneous() {
            assert_eq!(p.source, p.target);
        } else {
            assert_ne!(p.source, p.target);
        }
    }
}

#[test]
fn corpus_is_independent_of_thread_count() {
    let cfg = small_config(600);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| generate_corpus(&cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn corpus_files_round_trip() {
    let cfg = small_config(300);
    let c = generate_corpus(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&c, &c.manifest(&cfg), dir.path()).unwrap();
    assert_eq!(read_corpus(dir.path()).unwrap(), c);
    assert_eq!(read_manifest(dir.path()).unwrap(), c.manifest(&cfg));
    let text = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    assert!(text.starts_with('#'));
}

#[test]
fn truncated_record_names_its_line() {
    let cfg = small_config(20);
    let c = generate_corpus(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_split(&path, "train", &c.train).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let cut = &lines[3][..lines[3].len() / 2];
    lines[3] = cut;
    std::fs::write(&path, lines.join("\n")).unwrap();
    match read_split(&path) {
        Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_split_keeps_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("val.jsonl");
    write_split(&path, "val", &[]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with('#'));
    assert!(read_split(&path).unwrap().is_empty());
}

#[test]
fn stratified_split_sizes_are_exact() {
    let cfg = small_config(0);
    for n in [0usize, 1, 9, 10, 11, 999] {
        let pairs: Vec<FlowsheetPair> = (0..n as u64)
            .map(|i| FlowsheetPair {
                source: format!("s{i}"),
                target: "t".into(),
                errors: if i % 5 < 2 { vec!["x".into()] } else { vec![] },
                patterns: vec![],
                idx: i,
            })
            .collect();
        let c = split(pairs, &cfg);
        let train = (0.8 * n as f64).floor() as usize;
        let val = (0.1 * n as f64).floor() as usize;
        assert_eq!([c.train.len(), c.val.len(), c.test.len()], [train, val, n - train - val]);
    }
}
