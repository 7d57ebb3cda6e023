use std::collections::HashSet;
use std::fs;

use fsac_core::synth::{generate_corpus, read_corpus, write_corpus, GenConfig, Manifest};

use crate::{artifacts, desk_data, verdict};

fn within(m: &Manifest) -> bool {
    (m.total.erroneous_fraction - 0.40).abs() <= 0.01
        && [&m.train, &m.val, &m.test].iter().all(|s| (s.erroneous_fraction - 0.40).abs() <= 0.02)
}

#[test]
fn criterion_04_corpus_statistics() {
    let dir = desk_data();
    let corpus = read_corpus(&dir).unwrap();
    let cfg = GenConfig { n_pairs: 20_000, seed: 7, ..GenConfig::default() };
    let m = corpus.manifest(&cfg);
    let sizes = [corpus.train.len(), corpus.val.len(), corpus.test.len()];
    let mut keys = HashSet::new();
    let unique = corpus.splits().into_iter().flatten().all(|p| keys.insert((p.source.clone(), p.target.clone())));

    // Regenerate on a different thread count and compare the split files.
    let tmp = tempfile::tempdir().unwrap();
    let regen = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap().install(|| generate_corpus(&cfg).unwrap());
    write_corpus(&regen, &regen.manifest(&cfg), tmp.path()).unwrap();
    let identical = ["train.jsonl", "val.jsonl", "test.jsonl"]
        .iter()
        .all(|f| fs::read(dir.join(f)).unwrap() == fs::read(tmp.path().join(f)).unwrap());

    // The n = 500,000 run is too slow for the test suite; its manifest is
    // committed by `fsac gen --n 500000`.
    let scale: Option<Manifest> = fs::read_to_string(artifacts().join("scale/manifest.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let scale_ok = scale.as_ref().is_some_and(|s| s.total.pairs == 500_000 && within(s));

    let detail = format!(
        "sizes {sizes:?}, erroneous {:.4} (train {:.4} val {:.4} test {:.4}), unique {unique}, regenerated identical {identical}, n=500k {}",
        m.total.erroneous_fraction,
        m.train.erroneous_fraction,
        m.val.erroneous_fraction,
        m.test.erroneous_fraction,
        match &scale {
            Some(s) => format!("completed ({} pairs, erroneous {:.4})", s.total.pairs, s.total.erroneous_fraction),
            None => "missing".into(),
        }
    );
    verdict(4, "corpus statistics", sizes == [16_000, 2_000, 2_000] && within(&m) && unique && identical && scale_ok, &detail);
}
