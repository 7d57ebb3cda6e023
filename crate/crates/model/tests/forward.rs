use fsac_model::linalg::softmax_row;
use fsac_model::*;
use proptest::prelude::*;

fn small() -> ModelConfig {
    ModelConfig { d_model: 32, n_layers: 2, n_heads: 4, d_ff: 64, dropout: 0.0, ..ModelConfig::default() }
}

const SRC: [u32; 9] = [1, 4, 16, 5, 7, 12, 25, 13, 2];
const PREFIX: [u32; 8] = [1, 4, 16, 7, 9, 12, 25, 13];

/// Independent count: embeddings and output head, four projections per
/// attention block, two FFN matrices, one scale vector per norm, and one
/// relative-bias table per stack.
fn hand_count(c: &ModelConfig) -> usize {
    let (v, d, f, l) = (c.vocab_size, c.d_model, c.d_ff, c.n_layers);
    let attn = 4 * d * d;
    let ff = 2 * d * f;
    let enc = 2 * d + attn + ff;
    let dec = 3 * d + 2 * attn + ff;
    2 * v * d + l * (enc + dec) + 2 * c.rel_buckets * c.n_heads
}

#[test]
fn default_parameter_count() {
    let c = ModelConfig::default();
    assert_eq!(hand_count(&c), 1_851_392);
    assert_eq!(count_params(&c), 1_851_392);
    assert_eq!(Params::<f32>::init(&c, 0).unwrap().len(), 1_851_392);
}

proptest! {
    #[test]
    fn parameter_count_matches_formula(d in 1usize..6, heads in 1usize..4, l in 1usize..5, f in 1usize..64) {
        let c = ModelConfig { d_model: 8 * d * heads, n_heads: heads, n_layers: l, d_ff: f, ..ModelConfig::default() };
        prop_assert_eq!(count_params(&c), hand_count(&c));
    }

    #[test]
    fn softmax_rows_sum_to_one(row in prop::collection::vec(-80.0f32..80.0, 1..60)) {
        let mut r = row.clone();
        softmax_row(&mut r);
        let s: f32 = r.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-5, "{}", s);
        prop_assert!(r.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn attention_width_scales_quadratically() {
    let attn_share = |d: usize| {
        let c = ModelConfig { d_model: d, d_ff: 0, n_layers: 1, ..ModelConfig::default() };
        // Remove everything that is linear in d.
        count_params(&c) - 2 * c.vocab_size * d - 5 * d - 2 * c.rel_buckets * c.n_heads
    };
    assert_eq!(attn_share(256), 4 * attn_share(128));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = ModelConfig { n_heads: 5, ..ModelConfig::default() };
    assert!(matches!(Params::<f32>::init(&bad, 0), Err(ConfigError::HeadSplit { d_model: 128, n_heads: 5 })));
    assert!(ModelConfig { d_model: 0, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { dropout: 1.0, ..ModelConfig::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
}

#[test]
fn equal_seeds_give_identical_parameters() {
    let a = Params::<f32>::init(&ModelConfig::default(), 11).unwrap();
    let b = Params::<f32>::init(&ModelConfig::default(), 11).unwrap();
    let c = Params::<f32>::init(&ModelConfig::default(), 12).unwrap();
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.data, c.data);
    // Norm scales start at one and relative biases at zero.
    assert!(a.tensor("enc.0.ln1").unwrap().iter().all(|&v| v == 1.0));
    assert!(a.tensor("dec.rel_bias").unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn decoder_is_causal() {
    let p = Params::<f32>::init(&small(), 4).unwrap();
    let v = p.config.vocab_size;
    let base = forward_logits(&p, &SRC, &PREFIX).unwrap();
    for t in 1..PREFIX.len() {
        let mut changed = PREFIX;
        changed[t] = if changed[t] == 30 { 31 } else { 30 };
        let out = forward_logits(&p, &SRC, &changed).unwrap();
        for (a, b) in base[..t * v].iter().zip(&out[..t * v]) {
            assert!((a - b).abs() < 1e-6, "position < {t} moved: {a} vs {b}");
        }
        let moved = base[t * v..].iter().zip(&out[t * v..]).any(|(a, b)| (a - b).abs() > 1e-6);
        assert!(moved, "position {t} ignored its own input");
    }
}

#[test]
fn source_changes_reach_every_position() {
    let p = Params::<f32>::init(&small(), 4).unwrap();
    let v = p.config.vocab_size;
    let base = forward_logits(&p, &SRC, &PREFIX).unwrap();
    let mut src = SRC;
    src[3] = 40;
    let out = forward_logits(&p, &src, &PREFIX).unwrap();
    for t in 0..PREFIX.len() {
        assert!(base[t * v..(t + 1) * v].iter().zip(&out[t * v..(t + 1) * v]).any(|(a, b)| (a - b).abs() > 1e-6));
    }
}

#[test]
fn cross_entropy_reference_values() {
    let v = 53;
    let uniform = vec![0.25f64; 3 * v];
    let (s, g) = cross_entropy(&uniform, &[5, 9, 0], v, 0.0).unwrap();
    assert!((s.loss - (53f64).ln()).abs() < 1e-12, "{}", s.loss);
    assert_eq!(s.tokens, 2);
    // The PAD row gets no gradient; the others sum to zero.
    assert!(g[2 * v..].iter().all(|&x| x == 0.0));
    assert!(g[..v].iter().sum::<f64>().abs() < 1e-12);
    // Smoothing toward the uniform distribution costs nothing on uniform logits.
    let (s, _) = cross_entropy(&uniform, &[5, 9, 0], v, 0.1).unwrap();
    assert!((s.loss - (53f64).ln()).abs() < 1e-12);

    let mut peaked = vec![0.0f64; v];
    peaked[7] = 50.0;
    let (s, _) = cross_entropy(&peaked, &[7], v, 0.0).unwrap();
    assert!(s.loss < 1e-18 && s.correct == 1);
    let (s, _) = cross_entropy(&peaked, &[8], v, 0.0).unwrap();
    assert!((s.loss - 50.0).abs() < 1e-9 && s.correct == 0);

    assert_eq!(cross_entropy(&uniform, &[0, 0, 0], v, 0.0).unwrap_err(), ModelError::NoSupervisedPositions);
    assert!(matches!(cross_entropy(&uniform, &[1, 2], v, 0.0), Err(ModelError::ShapeMismatch { .. })));
}

#[test]
fn bad_inputs_are_reported() {
    let p = Params::<f32>::init(&small(), 0).unwrap();
    assert_eq!(forward_logits(&p, &[], &PREFIX).unwrap_err(), ModelError::EmptySequence);
    assert_eq!(forward_logits(&p, &[1, 99, 2], &PREFIX).unwrap_err(), ModelError::TokenOutOfRange(99));
    let long = vec![4u32; 300];
    assert!(matches!(forward_logits(&p, &long, &PREFIX), Err(ModelError::SequenceTooLong { len: 300, max: 256 })));
    let src = vec![SRC.to_vec()];
    let err = forward_backward(&p, Batch { src: &src, tgt: &[] }, 0.0, None, None).unwrap_err();
    assert_eq!(err, ModelError::BatchMismatch(1, 0));
}
