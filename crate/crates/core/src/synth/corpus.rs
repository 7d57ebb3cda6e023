//! Corpus generation, stratified splitting and the JSONL file format.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{build_catalog, Pattern};
use super::generate::{inject_errors, sample_flowsheet, GenConfig, GenError};
use crate::codec::serialize_canonical;

/// Regenerations per sample index before uniqueness is declared unattainable.
pub const MAX_DUPLICATE_RETRIES: u32 = 1000;

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowsheetPair {
    pub source: String,
    pub target: String,
    pub errors: Vec<String>,
    pub patterns: Vec<String>,
    pub idx: u64,
}

impl FlowsheetPair {
    pub fn is_erroneous(&self) -> bool {
        !self.errors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub pairs: usize,
    pub erroneous: usize,
    pub erroneous_fraction: f64,
}

impl SplitStats {
    pub fn of(pairs: &[FlowsheetPair]) -> SplitStats {
        let erroneous = pairs.iter().filter(|p| p.is_erroneous()).count();
        let frac = if pairs.is_empty() { 0.0 } else { erroneous as f64 / pairs.len() as f64 };
        SplitStats { pairs: pairs.len(), erroneous, erroneous_fraction: frac }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenConfig,
    pub seed: u64,
    pub total: SplitStats,
    pub train: SplitStats,
    pub val: SplitStats,
    pub test: SplitStats,
    /// Extra settings recorded by the caller, e.g. the effective run config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<FlowsheetPair>,
    pub val: Vec<FlowsheetPair>,
    pub test: Vec<FlowsheetPair>,
}

impl Corpus {
    pub fn splits(&self) -> [&[FlowsheetPair]; 3] {
        [&self.train, &self.val, &self.test]
    }

    pub fn manifest(&self, config: &GenConfig) -> Manifest {
        let all: Vec<FlowsheetPair> = self.splits().iter().flat_map(|s| s.iter().cloned()).collect();
        Manifest {
            config: config.clone(),
            seed: config.seed,
            total: SplitStats::of(&all),
            train: SplitStats::of(&self.train),
            val: SplitStats::of(&self.val),
            test: SplitStats::of(&self.test),
            run_config: None,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the random stream for one (sample, regeneration) pair.
pub fn sample_seed(seed: u64, idx: u64, attempt: u32) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ idx) ^ attempt as u64)
}

/// Exactly ⌊n·f⌋ of the first n indices are erroneous, spread evenly.
pub fn is_erroneous_index(idx: u64, fraction: f64) -> bool {
    const SCALE: u128 = 1_000_000_000;
    let p = (fraction * SCALE as f64).round() as u128;
    let i = idx as u128;
    (i + 1) * p / SCALE > i * p / SCALE
}

/// Generates the pair for one sample index. Depends only on (config, idx, attempt).
pub fn generate_sample(cfg: &GenConfig, catalog: &[Pattern], idx: u64, attempt: u32) -> Result<FlowsheetPair, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, idx, attempt));
    let erroneous = is_erroneous_index(idx, cfg.erroneous_fraction);
    let mut last_err = GenError::NoCorruption(0);
    for _ in 0..10 {
        let a = sample_flowsheet(&mut rng, cfg, catalog)?;
        let target = serialize_canonical(&a.graph)?;
        let patterns = a.instances.iter().map(|i| catalog[i.pattern].id.to_string()).collect();
        if !erroneous {
            return Ok(FlowsheetPair { source: target.clone(), target, errors: Vec::new(), patterns, idx });
        }
        match inject_errors(&a, &mut rng, cfg, catalog) {
            Ok((g, errors)) => {
                let source = serialize_canonical(&g)?;
                return Ok(FlowsheetPair { source, target, errors, patterns, idx });
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Generates, deduplicates and splits a corpus. Output depends only on the
/// config, not on the number of worker threads.
pub fn generate_corpus(cfg: &GenConfig) -> Result<Corpus, GenError> {
    cfg.validate()?;
    let catalog = build_catalog();
    let mut pairs: Vec<FlowsheetPair> = (0..cfg.n_pairs as u64)
        .into_par_iter()
        .map(|i| generate_sample(cfg, &catalog, i, 0))
        .collect::<Result<_, _>>()?;
    let mut seen: HashSet<(String, String)> = HashSet::with_capacity(pairs.len());
    for (i, slot) in pairs.iter_mut().enumerate() {
        let mut attempt = 0;
        while seen.contains(&(slot.source.clone(), slot.target.clone())) {
            attempt += 1;
            if attempt > MAX_DUPLICATE_RETRIES {
                return Err(GenError::Uniqueness { idx: i, attempts: MAX_DUPLICATE_RETRIES });
            }
            *slot = generate_sample(cfg, &catalog, i as u64, attempt)?;
        }
        seen.insert((slot.source.clone(), slot.target.clone()));
    }
    Ok(split(pairs, cfg))
}

/// Stratified split: correct and erroneous pairs are shuffled separately and
/// allocated so that every split has (nearly) the global ratio.
pub fn split(pairs: Vec<FlowsheetPair>, cfg: &GenConfig) -> Corpus {
    let n = pairs.len();
    let sizes = [
        (cfg.split[0] * n as f64).floor() as usize,
        (cfg.split[1] * n as f64).floor() as usize,
    ];
    let sizes = [sizes[0], sizes[1], n - sizes[0] - sizes[1]];
    let (mut bad, mut good): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|p| p.is_erroneous());
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x5EED_5EED));
    bad.shuffle(&mut rng);
    good.shuffle(&mut rng);
    let n_bad = bad.len();
    let mut bad_sizes = [0usize; 3];
    for s in 0..2 {
        bad_sizes[s] = ((n_bad * sizes[s]) as f64 / n.max(1) as f64).round() as usize;
        bad_sizes[s] = bad_sizes[s].min(sizes[s]);
    }
    bad_sizes[2] = n_bad - bad_sizes[0] - bad_sizes[1];
    let mut bad = bad.into_iter();
    let mut good = good.into_iter();
    let mut out: Vec<Vec<FlowsheetPair>> = (0..3)
        .map(|s| {
            let mut v: Vec<FlowsheetPair> = bad.by_ref().take(bad_sizes[s]).collect();
            v.extend(good.by_ref().take(sizes[s] - v.len()));
            v.sort_by_key(|p| p.idx);
            v
        })
        .collect();
    let test = out.pop().unwrap();
    let val = out.pop().unwrap();
    let train = out.pop().unwrap();
    Corpus { train, val, test }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

pub fn write_split(path: &Path, name: &str, pairs: &[FlowsheetPair]) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# flowsheet pairs, split={name}, n={}", pairs.len()).map_err(io_err(path))?;
    for p in pairs {
        let line = serde_json::to_string(p).expect("pairs serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_split(path: &Path) -> Result<Vec<FlowsheetPair>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(pair);
    }
    Ok(out)
}

/// Writes train/val/test JSONL files and `manifest.json` into `dir`.
pub fn write_corpus(corpus: &Corpus, manifest: &Manifest, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, pairs) in SPLIT_NAMES.iter().zip(corpus.splits()) {
        write_split(&dir.join(format!("{name}.jsonl")), name, pairs)?;
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn read_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let [train, val, test] = SPLIT_NAMES.map(|name| read_split(&dir.join(format!("{name}.jsonl"))));
    Ok(Corpus { train: train?, val: val?, test: test? })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CorpusError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Manifest { path, source })
}
