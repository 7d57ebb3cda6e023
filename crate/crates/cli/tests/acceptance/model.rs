use std::time::Instant;

use fsac_core::codec::vocab::{string_to_ids, EOS_ID, SOS_ID};
use fsac_core::synth::{generate_corpus, GenConfig};
use fsac_model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::verdict;

#[test]
fn criterion_05_gradient_check() {
    let cfg = ModelConfig { d_model: 8, n_layers: 1, n_heads: 2, d_ff: 16, dropout: 0.0, rel_buckets: 8, rel_max_distance: 16, ..ModelConfig::default() };
    let p = Params::<f32>::init(&cfg, 3).unwrap();
    let src = vec![vec![1, 4, 16, 5, 7, 2], vec![1, 4, 12, 25, 13, 26, 7, 2], vec![1, 9, 2]];
    let tgt = vec![vec![1, 4, 16, 7, 2], vec![1, 4, 12, 25, 21, 26, 7, 8, 2], vec![1, 9, 14, 2]];
    let mut grad = vec![0f32; p.len()];
    forward_backward(&p, Batch { src: &src, tgt: &tgt }, 0.0, None, Some(&mut grad)).unwrap();
    // Central differences of the 64-bit loss at the same (32-bit) weights.
    let mut reference: Params<f64> = p.cast();
    let loss = |r: &Params<f64>| forward_backward(r, Batch { src: &src, tgt: &tgt }, 0.0, None, None).unwrap().loss;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eps = 1e-5;
    let mut worst = 0f64;
    for _ in 0..100 {
        let i = rng.gen_range(0..p.len());
        let orig = reference.data[i];
        reference.data[i] = orig + eps;
        let up = loss(&reference);
        reference.data[i] = orig - eps;
        let down = loss(&reference);
        reference.data[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let scale = (grad[i] as f64).abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((grad[i] as f64 - numeric).abs() / scale);
        }
    }
    let detail = format!("{} parameters, max relative error {worst:.2e} over 100 coordinates (limit 1e-3)", p.len());
    verdict(5, "gradient check", p.len() <= 10_000 && worst <= 1e-3, &detail);
}

#[test]
fn criterion_06_overfit_sanity() {
    let started = Instant::now();
    let c = generate_corpus(&GenConfig { n_pairs: 128, seed: 4, patterns_min: 1, patterns_max: 3, ..GenConfig::default() }).unwrap();
    let data: Vec<Example> = tokenize_pairs(&c.train).into_iter().take(64).collect();
    let model = ModelConfig { d_model: 64, n_layers: 2, n_heads: 4, d_ff: 256, dropout: 0.0, ..ModelConfig::default() };
    let p = Params::<f32>::init(&model, 1).unwrap();
    let cfg = TrainConfig { learning_rate: 2e-3, max_steps: 2000, eval_every: 100, patience: 0, ..TrainConfig::default() };
    let out = train(p, &data, &data, &cfg, |_, _, _| {}).unwrap();
    let stats = evaluate_loss(&out.params, &data, 32).unwrap();
    let acc = stats.correct as f64 / stats.tokens as f64;
    let exact = data
        .iter()
        .filter(|e| greedy_decode(&out.params, &e.src, max_decode_len(model.max_seq_len, e.src.len())).unwrap().tokens == e.tgt)
        .count();
    let secs = started.elapsed().as_secs_f64();
    let detail = format!(
        "{} pairs, token accuracy {acc:.4} (>= 0.99), greedy exact {exact}/{}, {} steps, {secs:.0} s (limit 1800 s)",
        data.len(),
        data.len(),
        out.steps
    );
    verdict(6, "overfit sanity", data.len() == 64 && acc >= 0.99 && exact == data.len() && out.steps <= 2000 && secs < 1800.0, &detail);
}

fn log_softmax(row: &[f32]) -> Vec<f64> {
    let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let z: f64 = row.iter().map(|&v| (v as f64 - m).exp()).sum();
    row.iter().map(|&v| v as f64 - m - z.ln()).collect()
}

/// Vocabulary {PAD, SOS, EOS, UNK, x} with a hand-set output head; the
/// decoder picks among three tokens so every output can be enumerated.
fn toy() -> Params<f32> {
    let cfg = ModelConfig { vocab_size: 5, d_model: 4, n_layers: 1, n_heads: 1, d_ff: 4, dropout: 0.0, max_seq_len: 16, rel_buckets: 4, rel_max_distance: 8 };
    let mut p = Params::<f32>::init(&cfg, 1).unwrap();
    let head = p.layout.tensors.iter().find(|t| t.name == "lm_head").unwrap().range();
    let w = [
        [0.0, 0.0, 0.6, -0.4, 0.9],
        [0.0, 0.0, -0.8, 1.1, 0.2],
        [0.0, 0.0, 0.3, 0.5, -1.0],
        [0.0, 0.0, 1.2, -0.7, 0.4],
    ];
    for (dst, src) in p.data[head].iter_mut().zip(w.iter().flatten()) {
        *dst = *src;
    }
    p
}

/// All (score, tokens) outputs of length <= max_len, best first.
fn exhaustive(p: &Params<f32>, src: &[u32], max_len: usize) -> Vec<(f64, Vec<u32>)> {
    let v = p.config.vocab_size;
    let mut done = Vec::new();
    let mut frontier = vec![vec![SOS_ID]];
    for step in 0..max_len {
        let mut next = Vec::new();
        for s in frontier {
            for t in [EOS_ID, 3, 4] {
                let mut e = s.clone();
                e.push(t);
                if t == EOS_ID || step + 1 == max_len {
                    done.push(e);
                } else {
                    next.push(e);
                }
            }
        }
        frontier = next;
    }
    let mut scored: Vec<(f64, Vec<u32>)> = done
        .into_iter()
        .map(|s| {
            let logits = forward_logits(p, src, &s[..s.len() - 1]).unwrap();
            let lp: f64 = (1..s.len()).map(|i| log_softmax(&logits[(i - 1) * v..i * v])[s[i] as usize]).sum();
            (lp / (s.len() - 1) as f64, s)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored
}

#[test]
fn criterion_09_beam_search() {
    let model = ModelConfig { d_model: 32, n_layers: 2, n_heads: 4, d_ff: 64, dropout: 0.0, ..ModelConfig::default() };
    let mut p = Params::<f32>::init(&model, 8).unwrap();
    // A sharper head makes hypotheses finish at different lengths.
    let head = p.layout.tensors.iter().find(|t| t.name == "lm_head").unwrap().range();
    for w in &mut p.data[head] {
        *w *= 4.0;
    }
    let c = generate_corpus(&GenConfig { n_pairs: 1000, seed: 21, ..GenConfig::default() }).unwrap();
    let sources: Vec<Vec<u32>> = c.splits().into_iter().flatten().map(|x| string_to_ids(&x.source)).collect();
    let mut greedy_mismatch = 0;
    let mut unsorted = 0;
    let mut decodes = 0;
    for (i, src) in sources.iter().enumerate() {
        let max_len = max_decode_len(p.config.max_seq_len, src.len());
        let g = greedy_decode(&p, src, max_len).unwrap();
        let b = beam_decode(&p, src, 1, max_len).unwrap();
        greedy_mismatch += (b.len() != 1 || b[0].tokens != g.tokens || b[0].log_prob != g.log_prob) as usize;
        if i % 10 == 0 {
            let hyps = beam_decode(&p, src, 5, max_len).unwrap();
            decodes += 1;
            unsorted += hyps.windows(2).any(|w| w[0].score < w[1].score) as usize;
        }
    }
    let toy = toy();
    let mut enum_mismatch = 0;
    for src in [vec![1, 4, 3, 2], vec![1, 2], vec![1, 4, 4, 4, 4, 2]] {
        let all = exhaustive(&toy, &src, 4);
        let beam = beam_decode(&toy, &src, all.len(), 4).unwrap();
        enum_mismatch += (beam.len() != all.len()
            || beam.iter().zip(&all).any(|(h, (s, t))| &h.tokens != t || (h.score - s).abs() > 1e-5)) as usize;
    }
    let detail = format!(
        "beam-1 vs greedy mismatches {greedy_mismatch}/{}, exhaustive mismatches {enum_mismatch}/3, unsorted decodes {unsorted}/{decodes}",
        sources.len()
    );
    verdict(9, "beam search", sources.len() == 1000 && greedy_mismatch == 0 && enum_mismatch == 0 && unsorted == 0, &detail);
}
