//! Consistency training: pseudo-labels from the current model, sharpening,
//! confidence masking, the interpolated unsupervised loss, the supervised
//! loss, and the training loop.

mod fit;
mod metrics;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{format_input, LabelDistribution, LabelVocab, MarkerScheme, RelationStatement};
use crate::encoder::{EncodedInput, Gradients, RelationModel, TokenVocab};
use crate::error::{Error, Result};
use crate::remix::{mix_labels, remix_logits, sample_lambda, sample_layer, MixSpec, MixedBatchItem};
use crate::scalar::Scalar;

pub use fit::{fit, fit_with, EarlyStopping, EpochMetrics, FitOutcome, Verdict};
pub use metrics::{evaluate, score_predictions, ClassScore, Evaluation};

/// Entries are clamped to this value before sharpening.
pub const SHARPEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Sharpening temperature `T`.
    pub temperature: f64,
    /// Confidence threshold.
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Weight of the unsupervised loss.
    pub gamma_m: f64,
    /// Augmentations per unlabelled statement.
    pub k: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// When false, pairs are `(s, s)` with `lambda = 1`: consistency without
    /// interpolation.
    pub mix: bool,
    /// Keep every interpolated point in the fit outcome.
    pub record_mix: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            gamma: 0.15,
            alpha: 60.0,
            beta: 60.0,
            gamma_m: 0.1,
            k: 2,
            batch_size: 16,
            lr: 5e-5,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            patience: 5,
            max_epochs: 50,
            mix: true,
            record_mix: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.gamma_m >= 0.0 && self.gamma_m.is_finite()) {
            return fail(format!("gamma_m must be non-negative, got {}", self.gamma_m));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return fail(format!("warmup_ratio must lie in [0, 1), got {}", self.warmup_ratio));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return fail("patience and max_epochs must be at least 1".into());
        }
        self.mix_spec(vec![1]).validate(1)
    }

    pub fn mix_spec(&self, layer_set: Vec<usize>) -> MixSpec {
        MixSpec {
            alpha: self.alpha,
            beta: self.beta,
            layer_set,
            seed: self.seed,
        }
    }
}

/// An encoded statement with its gold class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledExample {
    pub input: EncodedInput,
    pub label: usize,
}

/// Formats and encodes `stmt` for the model.
pub fn encode_statement(stmt: &RelationStatement, scheme: MarkerScheme, tokens: &TokenVocab) -> Result<EncodedInput> {
    Ok(tokens.encode(&format_input(stmt, scheme)?))
}

pub fn encode_labelled(
    data: &[RelationStatement],
    scheme: MarkerScheme,
    tokens: &TokenVocab,
    labels: &LabelVocab,
) -> Result<Vec<LabelledExample>> {
    data.iter()
        .map(|s| {
            Ok(LabelledExample {
                input: encode_statement(s, scheme, tokens)?,
                label: labels.label_of(s)?,
            })
        })
        .collect()
}

/// Unlabelled statements and their augmentations.
///
/// The merged view lists every original followed by its `K` augmentations,
/// so merged index `j` belongs to original `j / (K + 1)`; all members of a
/// group share that original's pseudo-label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnlabelledPool {
    originals: Vec<EncodedInput>,
    augmentations: Vec<Vec<EncodedInput>>,
    k: usize,
}

impl UnlabelledPool {
    /// `augmentations[i]` are the augmentations of `originals[i]`; every
    /// original must have the same number. An empty outer list means `K = 0`.
    pub fn new(originals: Vec<EncodedInput>, augmentations: Vec<Vec<EncodedInput>>) -> Result<Self> {
        let augmentations = if augmentations.is_empty() {
            vec![Vec::new(); originals.len()]
        } else {
            augmentations
        };
        if augmentations.len() != originals.len() {
            return Err(Error::Config(format!(
                "{} augmentation groups for {} unlabelled statements",
                augmentations.len(),
                originals.len()
            )));
        }
        let k = augmentations.first().map_or(0, Vec::len);
        if augmentations.iter().any(|a| a.len() != k) {
            return Err(Error::Config("every unlabelled statement needs the same number of augmentations".into()));
        }
        Ok(Self {
            originals,
            augmentations,
            k,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Keeps only the first `k` augmentations of every original.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k > self.k {
            return Err(Error::Config(format!(
                "{k} augmentations requested but the pool holds {}",
                self.k
            )));
        }
        Ok(Self {
            originals: self.originals.clone(),
            augmentations: self.augmentations.iter().map(|a| a[..k].to_vec()).collect(),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    pub fn original(&self, i: usize) -> &EncodedInput {
        &self.originals[i]
    }

    pub fn augmentations_of(&self, i: usize) -> &[EncodedInput] {
        &self.augmentations[i]
    }

    pub fn merged_len(&self) -> usize {
        self.originals.len() * (self.k + 1)
    }

    /// Original index and input of merged item `j`.
    pub fn merged(&self, j: usize) -> (usize, &EncodedInput) {
        let (i, r) = (j / (self.k + 1), j % (self.k + 1));
        let input = if r == 0 { &self.originals[i] } else { &self.augmentations[i][r - 1] };
        (i, input)
    }
}

/// Mean of the model's predictions on `x` and its augmentations.
pub fn pseudo_label<F: Scalar>(
    model: &RelationModel<F>,
    x: &EncodedInput,
    augs: &[EncodedInput],
) -> Result<LabelDistribution<F>> {
    let mut sum = model.predict(x)?.probs().to_vec();
    for a in augs {
        for (s, p) in sum.iter_mut().zip(model.predict(a)?.probs()) {
            *s += *p;
        }
    }
    let n = F::of((augs.len() + 1) as f64);
    Ok(LabelDistribution::new_unchecked(sum.into_iter().map(|s| s / n).collect()))
}

/// `y^(1/T)` renormalised; entries are floored at [`SHARPEN_FLOOR`] first.
/// `T = 1` returns `y` untouched.
pub fn sharpen<F: Scalar>(y: &LabelDistribution<F>, temperature: f64) -> LabelDistribution<F> {
    if temperature == 1.0 {
        return y.clone();
    }
    let powered: Vec<f64> = y
        .probs()
        .iter()
        .map(|p| p.as_f64().max(SHARPEN_FLOOR).powf(1.0 / temperature))
        .collect();
    let total: f64 = powered.iter().sum();
    LabelDistribution::new_unchecked(powered.into_iter().map(|p| F::of(p / total)).collect())
}

/// True iff both distributions are confident beyond `gamma`.
pub fn confidence_mask<F: Scalar>(y_s: &LabelDistribution<F>, y_t: &LabelDistribution<F>, gamma: f64) -> bool {
    y_s.max().as_f64() > gamma && y_t.max().as_f64() > gamma
}

pub fn total_loss<F: Scalar>(sup: F, unsup: F, gamma_m: f64) -> F {
    sup + F::of(gamma_m) * unsup
}

/// One unsupervised term: merged indices `s` and `t`, interpolated with
/// `lambda` at `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnsupPair {
    pub s: usize,
    pub t: usize,
    pub lambda: f64,
    pub layer: usize,
}

/// Draws `cfg.batch_size` pairs uniformly with replacement from the merged
/// pool. Coefficients are drawn for every pair, masked or not, so the random
/// stream does not depend on model predictions.
pub fn draw_pairs<R: Rng + ?Sized>(
    pool: &UnlabelledPool,
    cfg: &TrainConfig,
    layer_set: &[usize],
    rng: &mut R,
) -> Vec<UnsupPair> {
    let n = pool.merged_len();
    if n == 0 {
        return Vec::new();
    }
    let spec = cfg.mix_spec(layer_set.to_vec());
    (0..cfg.batch_size)
        .map(|_| {
            let s = rng.random_range(0..n);
            if cfg.mix {
                let t = rng.random_range(0..n);
                let lambda = sample_lambda(&spec, rng);
                let layer = sample_layer(&spec, rng);
                UnsupPair { s, t, lambda, layer }
            } else {
                UnsupPair {
                    s,
                    t: s,
                    lambda: 1.0,
                    layer: layer_set[0],
                }
            }
        })
        .collect()
}

/// Pseudo-labels keyed by original index; constants for the step.
pub type PseudoLabels<F> = BTreeMap<usize, LabelDistribution<F>>;

/// Pseudo-labels of every original touched by `pairs`.
pub fn pseudo_labels_for<F: Scalar>(
    model: &RelationModel<F>,
    pool: &UnlabelledPool,
    pairs: &[UnsupPair],
) -> Result<PseudoLabels<F>> {
    let mut needed: Vec<usize> = pairs
        .iter()
        .flat_map(|p| [pool.merged(p.s).0, pool.merged(p.t).0])
        .collect();
    needed.sort_unstable();
    needed.dedup();
    needed
        .par_iter()
        .map(|&i| Ok((i, pseudo_label(model, pool.original(i), pool.augmentations_of(i))?)))
        .collect()
}

/// Loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<F> {
    pub sup: F,
    pub unsup: F,
    pub total: F,
    /// Share of pairs removed by the confidence mask.
    pub masked_fraction: f64,
}

/// Everything one step of training needs besides the optimiser.
pub struct StepOutcome<F> {
    pub losses: LossBreakdown<F>,
    pub grads: Option<Gradients<F>>,
    pub mixed: Vec<MixedBatchItem>,
}

const CHUNK: usize = 4;

enum Term<'a> {
    Sup(&'a LabelledExample),
    Unsup {
        pair: UnsupPair,
        target: Vec<f64>,
    },
}

/// `L_sup + gamma_m * L_unsp` for a labelled batch and a set of pairs whose
/// pseudo-labels are given, optionally with parameter gradients.
///
/// Terms are evaluated in parallel in fixed chunks and reduced in order, so
/// the result does not depend on thread scheduling.
pub fn objective<F: Scalar>(
    model: &RelationModel<F>,
    batch: &[LabelledExample],
    pool: &UnlabelledPool,
    pairs: &[UnsupPair],
    labels: &PseudoLabels<F>,
    cfg: &TrainConfig,
    with_grads: bool,
) -> Result<StepOutcome<F>> {
    let mut terms: Vec<Term<'_>> = batch.iter().map(Term::Sup).collect();
    let mut mixed = Vec::with_capacity(pairs.len());
    let mut masked = 0usize;
    for &pair in pairs {
        let lookup = |j: usize| {
            labels
                .get(&pool.merged(j).0)
                .ok_or_else(|| Error::Config(format!("no pseudo-label for merged item {j}")))
        };
        let (y_s, y_t) = (lookup(pair.s)?, lookup(pair.t)?);
        let target = mix_labels(&sharpen(y_s, cfg.temperature), &sharpen(y_t, cfg.temperature), pair.lambda)?;
        let target: Vec<f64> = target.probs().iter().map(|p| p.as_f64()).collect();
        mixed.push(MixedBatchItem {
            lambda: pair.lambda,
            layer: pair.layer,
            source_pair: (pair.s, pair.t),
            mixed_label: target.clone(),
        });
        if confidence_mask(y_s, y_t, cfg.gamma) {
            terms.push(Term::Unsup { pair, target });
        } else {
            masked += 1;
        }
    }

    let sup_scale = if batch.is_empty() { 0.0 } else { 1.0 / batch.len() as f64 };
    let unsup_scale = if pairs.is_empty() { 0.0 } else { 1.0 / pairs.len() as f64 };
    let chunks: Vec<Result<(F, F, Option<Gradients<F>>)>> = terms
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = with_grads.then(|| Gradients::zeros_like(model.store()));
            let (mut sup, mut unsup) = (F::zero(), F::zero());
            for term in chunk {
                let mut tape = model.tape();
                let (logits, target, scale) = match term {
                    Term::Sup(ex) => {
                        let logits = model.logits(&mut tape, &ex.input)?;
                        let target = LabelDistribution::<F>::one_hot(model.num_classes(), ex.label);
                        (logits, target.probs().to_vec(), sup_scale)
                    }
                    Term::Unsup { pair, target } => {
                        let (a, b) = (pool.merged(pair.s).1, pool.merged(pair.t).1);
                        let logits = remix_logits(model, &mut tape, a, b, pair.lambda, pair.layer)?;
                        let target = target.iter().map(|&p| F::of(p)).collect();
                        (logits, target, cfg.gamma_m * unsup_scale)
                    }
                };
                let loss = tape.softmax_cross_entropy(logits, &target)?;
                let value = tape.scalar(loss);
                match term {
                    Term::Sup(_) => sup += value,
                    Term::Unsup { .. } => unsup += value,
                }
                if let Some(g) = grads.as_mut() {
                    if scale != 0.0 {
                        tape.backward(loss, F::of(scale), g)?;
                    }
                }
            }
            Ok((sup, unsup, grads))
        })
        .collect();

    let (mut sup, mut unsup) = (F::zero(), F::zero());
    let mut grads = with_grads.then(|| Gradients::zeros_like(model.store()));
    for chunk in chunks {
        let (s, u, g) = chunk?;
        sup += s;
        unsup += u;
        if let (Some(total), Some(g)) = (grads.as_mut(), g) {
            total.add_assign(&g);
        }
    }
    let sup = sup * F::of(sup_scale);
    let unsup = unsup * F::of(unsup_scale);
    Ok(StepOutcome {
        losses: LossBreakdown {
            sup,
            unsup,
            total: total_loss(sup, unsup, cfg.gamma_m),
            masked_fraction: if pairs.is_empty() { 0.0 } else { masked as f64 / pairs.len() as f64 },
        },
        grads,
        mixed,
    })
}

/// Mean cross-entropy of the batch against its one-hot labels.
pub fn sup_loss<F: Scalar>(model: &RelationModel<F>, batch: &[LabelledExample]) -> Result<F> {
    let cfg = TrainConfig::default();
    let out = objective(model, batch, &UnlabelledPool::empty(), &[], &BTreeMap::new(), &cfg, false)?;
    Ok(out.losses.sup)
}

/// `L_unsp` for explicit pairs, with pseudo-labels from the current model.
pub fn unsup_loss_for_pairs<F: Scalar>(
    model: &RelationModel<F>,
    pool: &UnlabelledPool,
    pairs: &[UnsupPair],
    cfg: &TrainConfig,
) -> Result<LossBreakdown<F>> {
    let labels = pseudo_labels_for(model, pool, pairs)?;
    Ok(objective(model, &[], pool, pairs, &labels, cfg, false)?.losses)
}

/// `L_unsp` for `cfg.batch_size` freshly drawn pairs.
pub fn unsup_loss<F: Scalar, R: Rng + ?Sized>(
    model: &RelationModel<F>,
    pool: &UnlabelledPool,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossBreakdown<F>> {
    let pairs = draw_pairs(pool, cfg, &model.config().mixup_layers, rng);
    unsup_loss_for_pairs(model, pool, &pairs, cfg)
}
