use fsac_core::synth::{generate_corpus, GenConfig};
use fsac_model::*;

fn examples(n: usize, seed: u64) -> Vec<Example> {
    let c = generate_corpus(&GenConfig { n_pairs: n * 2, seed, patterns_min: 1, patterns_max: 3, ..GenConfig::default() }).unwrap();
    tokenize_pairs(&c.train).into_iter().take(n).collect()
}

fn small(d: usize, layers: usize) -> ModelConfig {
    ModelConfig { d_model: d, n_layers: layers, n_heads: 4, d_ff: 4 * d, dropout: 0.0, ..ModelConfig::default() }
}

#[test]
fn equal_seeds_give_identical_curves() {
    let data = examples(48, 9);
    let (tr, va) = data.split_at(40);
    let cfg = TrainConfig { max_steps: 12, eval_every: 4, batch_size: 8, seed: 3, ..TrainConfig::default() };
    let model = ModelConfig { dropout: 0.1, ..small(32, 1) };
    let run = || {
        let mut seen = Vec::new();
        let out = train(Params::init(&model, 2).unwrap(), tr, va, &cfg, |c, _, _| seen.push(*c)).unwrap();
        assert_eq!(seen, out.curves);
        (out.curves, out.params.data)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let cfg2 = TrainConfig { seed: 4, ..cfg.clone() };
    let c = train(Params::init(&model, 2).unwrap(), tr, va, &cfg2, |_, _, _| {}).unwrap();
    assert_ne!(a, c.curves);
}

#[test]
fn early_stopping_and_length_guard() {
    let data = examples(16, 5);
    let p = Params::<f32>::init(&small(32, 1), 0).unwrap();
    // A learning rate this large stops improving almost at once.
    let cfg = TrainConfig { learning_rate: 0.5, max_steps: 400, eval_every: 2, patience: 3, batch_size: 4, ..TrainConfig::default() };
    let out = train(p.clone(), &data, &data, &cfg, |_, _, _| {}).unwrap();
    assert!(matches!(out.stop, StopReason::EarlyStop | StopReason::Diverged), "{:?}", out.stop);
    assert!(out.steps < 400);
    let best = out.curves.iter().map(|c| c.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(best, out.best_val_loss);

    let mut long = data.clone();
    long[3].tgt = vec![4; 300];
    let err = train(p, &long, &data, &TrainConfig::default(), |_, _, _| {}).unwrap_err();
    assert!(matches!(err, TrainError::SequenceTooLong { split: "train", index: 3, .. }), "{err}");
}

#[test]
fn clipping_bounds_the_global_norm() {
    let mut g = vec![3.0f32, 4.0];
    assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
    assert!((g[0] - 0.6).abs() < 1e-7 && (g[1] - 0.8).abs() < 1e-7);
    let mut h = vec![0.3f32, 0.4];
    clip_grad_norm(&mut h, 1.0);
    assert_eq!(h, vec![0.3, 0.4]);
}

#[test]
fn single_cell_grid_equals_one_training_run() {
    let data = examples(24, 6);
    let (tr, va) = data.split_at(20);
    let base_model = small(32, 1);
    let base_train = TrainConfig { max_steps: 6, eval_every: 3, ..TrainConfig::default() };
    let space = GridSpace { d_model: vec![32], n_layers: vec![1], learning_rate: vec![1e-3], batch_size: vec![4] };
    let results = grid_search(&space, &base_model, &base_train, tr, va, |_| {});
    assert_eq!(results.len(), 1);
    let tc = TrainConfig { learning_rate: 1e-3, batch_size: 4, ..base_train.clone() };
    let direct = train(Params::init(&small(32, 1), tc.seed).unwrap(), tr, va, &tc, |_, _, _| {}).unwrap();
    assert_eq!(results[0].best_val_loss, Some(direct.best_val_loss));
    assert_eq!(results[0].steps, 6);
}

#[test]
fn failed_cells_are_recorded_and_ranked_last() {
    let data = examples(24, 6);
    let (tr, va) = data.split_at(20);
    // d_model 30 does not split over 4 heads.
    let space = GridSpace { d_model: vec![30, 32], n_layers: vec![1], learning_rate: vec![1e-3], batch_size: vec![4] };
    let base_train = TrainConfig { max_steps: 2, eval_every: 2, ..TrainConfig::default() };
    let mut seen = 0;
    let results = grid_search(&space, &small(32, 1), &base_train, tr, va, |_| seen += 1);
    assert_eq!(seen, 2);
    assert_eq!(results[0].cell.d_model, 32);
    assert!(!results[0].failed());
    assert!(results[1].failed() && results[1].error.as_deref().unwrap().contains("divisible"));
    let table = report_table(&results);
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("failed"));
    assert_eq!(GridSpace::default().cells().len(), 81);
}
