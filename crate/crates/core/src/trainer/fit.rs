//! The training loop with best-on-dev early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{draw_pairs, evaluate, objective, pseudo_labels_for, LabelledExample, TrainConfig, UnlabelledPool};
use crate::encoder::{AdamW, AdamWConfig, ParamStore, RelationModel, WarmupLinear};
use crate::error::{Error, Result};
use crate::remix::MixedBatchItem;
use crate::scalar::Scalar;

const BATCH_STREAM: u64 = 0;
const UNSUP_STREAM: u64 = 1;

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub sup_loss: f64,
    pub unsup_loss: f64,
    pub masked_fraction: f64,
    pub dev_f1: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` epochs have passed without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        match self.best {
            Some((_, best)) if score <= best => {}
            _ => {
                self.best = Some((epoch, score));
                return Verdict::Improved;
            }
        }
        let (best_epoch, _) = self.best.expect("set above");
        if epoch - best_epoch >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<F: Scalar> {
    /// The model restored to its best dev epoch.
    pub model: RelationModel<F>,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub mixed: Vec<MixedBatchItem>,
}

/// [`fit_with`] without a step observer.
pub fn fit<F: Scalar>(
    model: RelationModel<F>,
    labelled: &[LabelledExample],
    pool: &UnlabelledPool,
    dev: &[LabelledExample],
    na: usize,
    cfg: &TrainConfig,
) -> Result<FitOutcome<F>> {
    fit_with(model, labelled, pool, dev, na, cfg, |_, _| {})
}

/// Trains on `labelled` and `pool`, scoring `dev` after every epoch.
///
/// The unsupervised term is skipped entirely when `gamma_m` is 0 or the pool
/// is empty; it then draws nothing from its random stream, so such a run is
/// step-for-step identical to purely supervised training. `on_step` sees the
/// parameters after every optimiser step.
pub fn fit_with<F: Scalar>(
    mut model: RelationModel<F>,
    labelled: &[LabelledExample],
    pool: &UnlabelledPool,
    dev: &[LabelledExample],
    na: usize,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, &ParamStore<F>),
) -> Result<FitOutcome<F>> {
    cfg.validate()?;
    if labelled.is_empty() {
        return Err(Error::Config("no labelled examples to train on".into()));
    }
    let pool = if pool.is_empty() { UnlabelledPool::empty() } else { pool.with_k(cfg.k)? };
    let unsupervised = cfg.gamma_m > 0.0 && !pool.is_empty();
    let layer_set = model.config().mixup_layers.clone();

    let steps_per_epoch = labelled.len().div_ceil(cfg.batch_size);
    let schedule = WarmupLinear {
        peak_lr: cfg.lr,
        warmup_ratio: cfg.warmup_ratio,
        total_steps: cfg.max_epochs * steps_per_epoch,
    };
    let mut optim = AdamW::new(
        model.store(),
        AdamWConfig {
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(BATCH_STREAM);
    let mut unsup_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    unsup_rng.set_stream(UNSUP_STREAM);

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.store().clone();
    let mut history = Vec::new();
    let mut mixed_log = Vec::new();
    let mut order: Vec<usize> = (0..labelled.len()).collect();
    let mut step = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut batch_rng);
        let (mut sup_sum, mut unsup_sum, mut masked_sum, mut lr) = (0.0, 0.0, 0.0, 0.0);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<LabelledExample> = idx.iter().map(|&i| labelled[i].clone()).collect();
            let pairs = if unsupervised {
                draw_pairs(&pool, cfg, &layer_set, &mut unsup_rng)
            } else {
                Vec::new()
            };
            let labels = pseudo_labels_for(&model, &pool, &pairs)?;
            let out = objective(&model, &batch, &pool, &pairs, &labels, cfg, true)?;
            let grads = out.grads.expect("requested");
            let store = model.store_mut();
            store.zero_grad();
            store.accumulate(&grads);
            lr = optim.step(store, step, &schedule);
            on_step(step, model.store());
            step += 1;

            sup_sum += out.losses.sup.as_f64();
            unsup_sum += out.losses.unsup.as_f64();
            masked_sum += out.losses.masked_fraction;
            if cfg.record_mix {
                mixed_log.extend(out.mixed);
            }
        }
        let dev_f1 = evaluate(&model, dev, na)?.micro_f1;
        let n = steps_per_epoch as f64;
        history.push(EpochMetrics {
            epoch,
            sup_loss: sup_sum / n,
            unsup_loss: unsup_sum / n,
            masked_fraction: masked_sum / n,
            dev_f1,
            lr,
        });
        match stopper.observe(epoch, dev_f1) {
            Verdict::Improved => best = model.store().clone(),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    model.store_mut().copy_values_from(&best)?;
    let (best_epoch, best_dev_f1) = stopper.best().expect("at least one epoch");
    Ok(FitOutcome {
        model,
        history,
        best_epoch,
        best_dev_f1,
        mixed: mixed_log,
    })
}
