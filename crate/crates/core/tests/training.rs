//! Loss values against hand computation, and training-loop contracts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remix_re::corpus::LabelDistribution;
use remix_re::encoder::{EncodedInput, EncoderConfig, RelationModel};
use remix_re::trainer::{
    fit, fit_with, objective, pseudo_label, sup_loss, unsup_loss_for_pairs, LabelledExample, TrainConfig,
    UnlabelledPool, UnsupPair,
};

fn input(ids: Vec<usize>) -> EncodedInput {
    let n = ids.len();
    EncodedInput { ids, valid_len: n, head_marker_pos: 1, tail_marker_pos: 2 }
}

fn config(num_classes: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: 2,
        model_dim: 16,
        num_heads: 2,
        ffn_dim: 16,
        vocab_size: 24,
        max_seq_len: 16,
        mixup_layers: vec![1, 2],
        num_classes,
        classifier_hidden: 8,
        init_seed: 5,
        ..Default::default()
    }
}

/// A model whose output is `softmax(bias)` for every input.
fn constant_model(bias: &[f64]) -> RelationModel<f64> {
    let mut m = RelationModel::new(config(bias.len())).unwrap();
    let w2 = m.store().find("classifier.w2").unwrap();
    m.store_mut().value_mut(w2).fill(0.0);
    let b2 = m.store().find("classifier.b2").unwrap();
    for (i, &b) in bias.iter().enumerate() {
        m.store_mut().value_mut(b2)[[0, i]] = b;
    }
    m
}

fn softmax2(b: [f64; 2]) -> [f64; 2] {
    let z = b[0].exp() + b[1].exp();
    [b[0].exp() / z, b[1].exp() / z]
}

#[test]
fn supervised_loss_by_hand() {
    let m = constant_model(&[0.4, -0.3]);
    let p = softmax2([0.4, -0.3]);
    let batch = [
        LabelledExample { input: input(vec![2, 3, 4]), label: 0 },
        LabelledExample { input: input(vec![2, 5, 6, 7]), label: 1 },
    ];
    let want = (-p[0].ln() - p[1].ln()) / 2.0;
    assert!((sup_loss(&m, &batch).unwrap() - want).abs() < 1e-6);

    let uniform = constant_model(&[0.0, 0.0, 0.0]);
    let one = [LabelledExample { input: input(vec![2, 3]), label: 2 }];
    assert!((sup_loss(&uniform, &one).unwrap() - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn unsupervised_loss_by_hand() {
    let m = constant_model(&[0.4, -0.3]);
    let p = softmax2([0.4, -0.3]);
    let pool = UnlabelledPool::new(vec![input(vec![2, 3]), input(vec![2, 4, 5]), input(vec![2, 6])], vec![]).unwrap();
    let labels: BTreeMap<usize, LabelDistribution<f64>> = [
        (0, LabelDistribution::new(vec![0.9, 0.1]).unwrap()),
        (1, LabelDistribution::new(vec![0.3, 0.7]).unwrap()),
        (2, LabelDistribution::new(vec![0.6, 0.4]).unwrap()),
    ]
    .into_iter()
    .collect();
    let pairs = [
        UnsupPair { s: 0, t: 1, lambda: 0.25, layer: 1 },
        UnsupPair { s: 2, t: 0, lambda: 0.6, layer: 2 },
    ];
    let cfg = TrainConfig { temperature: 0.5, gamma: 0.65, gamma_m: 1.0, ..Default::default() };
    let out = objective(&m, &[], &pool, &pairs, &labels, &cfg, false).unwrap();

    // Sharpened with T = 0.5: squares, renormalised.
    let s0 = [0.81 / 0.82, 0.01 / 0.82];
    let s1 = [0.09 / 0.58, 0.49 / 0.58];
    let target = [0.25 * s0[0] + 0.75 * s1[0], 0.25 * s0[1] + 0.75 * s1[1]];
    // The second pair is masked: max 0.6 does not exceed 0.65.
    let want = -(target[0] * p[0].ln() + target[1] * p[1].ln()) / 2.0;
    assert!((out.losses.unsup - want).abs() < 1e-6, "{} vs {want}", out.losses.unsup);
    assert_eq!(out.losses.masked_fraction, 0.5);

    let all_masked = TrainConfig { gamma: 0.95, ..cfg };
    assert_eq!(objective(&m, &[], &pool, &pairs, &labels, &all_masked, false).unwrap().losses.unsup, 0.0);
}

#[test]
fn self_pairs_reduce_to_prediction_entropy() {
    let m = RelationModel::<f64>::new(config(4)).unwrap();
    let originals: Vec<_> = (0..5).map(|i| input(vec![2, 3 + i, 10 + i, 20 - i])).collect();
    let pool = UnlabelledPool::new(originals.clone(), vec![]).unwrap();
    let cfg = TrainConfig { temperature: 1.0, gamma: 0.0, gamma_m: 1.0, k: 0, ..Default::default() };
    let pairs: Vec<_> = (0..5).map(|s| UnsupPair { s, t: s, lambda: 1.0, layer: 2 }).collect();
    let loss = unsup_loss_for_pairs(&m, &pool, &pairs, &cfg).unwrap().unsup;
    let want = originals.iter().map(|x| m.predict(x).unwrap().entropy()).sum::<f64>() / 5.0;
    assert!((loss - want).abs() < 1e-9);
}

#[test]
fn pseudo_label_is_the_mean_prediction() {
    let m = RelationModel::<f64>::new(config(3)).unwrap();
    let x = input(vec![2, 3, 4, 5]);
    assert_eq!(pseudo_label(&m, &x, &[x.clone(), x.clone()]).unwrap(), m.predict(&x).unwrap());
    let augs = [input(vec![2, 9, 4]), input(vec![2, 3, 11, 12, 5])];
    let y = pseudo_label(&m, &x, &augs).unwrap();
    let preds: Vec<_> = [&x, &augs[0], &augs[1]].iter().map(|i| m.predict(i).unwrap()).collect();
    for c in 0..3 {
        let mean = preds.iter().map(|p| p.probs()[c]).sum::<f64>() / 3.0;
        assert!((y.probs()[c] - mean).abs() < 1e-15);
    }
    assert!((y.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

/// Label = parity of the token after the marker.
fn toy_data(n: usize, seed: u64) -> Vec<LabelledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let key = rng.random_range(3..13);
            let len = rng.random_range(3..8);
            let mut ids = vec![2, key];
            ids.extend((0..len).map(|_| rng.random_range(13..24)));
            LabelledExample { input: input(ids), label: key % 3 }
        })
        .collect()
}

fn quick() -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 4,
        patience: 10,
        k: 1,
        gamma: 0.0,
        ..Default::default()
    }
}

fn pool_from(data: &[LabelledExample]) -> UnlabelledPool {
    let originals: Vec<_> = data.iter().map(|e| e.input.clone()).collect();
    let augs = originals.iter().map(|x| vec![x.clone()]).collect();
    UnlabelledPool::new(originals, augs).unwrap()
}

fn trajectory(cfg: &TrainConfig, pool: &UnlabelledPool) -> (Vec<Vec<f64>>, Vec<remix_re::trainer::EpochMetrics>) {
    let train = toy_data(24, 1);
    let dev = toy_data(12, 2);
    let mut steps = Vec::new();
    let out = fit_with(RelationModel::<f64>::new(config(3)).unwrap(), &train, pool, &dev, 0, cfg, |_, store| {
        steps.push(store.params().iter().flat_map(|p| p.value.iter().copied()).collect());
    })
    .unwrap();
    (steps, out.history)
}

#[test]
fn zero_weight_run_equals_supervised_run_step_for_step() {
    let pool = pool_from(&toy_data(20, 3));
    let (a, ha) = trajectory(&TrainConfig { gamma_m: 0.0, ..quick() }, &pool);
    let (b, hb) = trajectory(&TrainConfig { gamma_m: 0.5, ..quick() }, &UnlabelledPool::empty());
    assert_eq!(a.len(), 12);
    assert_eq!(a, b);
    assert_eq!(ha, hb);

    let (c, _) = trajectory(&TrainConfig { gamma_m: 0.5, ..quick() }, &pool);
    assert_ne!(a, c);
}

#[test]
fn runs_are_reproducible() {
    let pool = pool_from(&toy_data(20, 3));
    let cfg = TrainConfig { gamma_m: 1.0, ..quick() };
    assert_eq!(trajectory(&cfg, &pool), trajectory(&cfg, &pool));
}

#[test]
fn fit_returns_the_best_epoch() {
    let train = toy_data(30, 4);
    let dev = toy_data(15, 5);
    let cfg = TrainConfig { max_epochs: 6, gamma_m: 0.0, ..quick() };
    let out = fit(RelationModel::<f64>::new(config(3)).unwrap(), &train, &UnlabelledPool::empty(), &dev, 0, &cfg).unwrap();
    let best = out.history.iter().map(|h| h.dev_f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_dev_f1, best);
    assert_eq!(out.history[out.best_epoch - 1].dev_f1, best);
    let rescored = remix_re::trainer::evaluate(&out.model, &dev, 0).unwrap().micro_f1;
    assert_eq!(rescored, best);
    assert!(out.history.iter().all(|h| h.unsup_loss == 0.0 && h.masked_fraction == 0.0));
}
