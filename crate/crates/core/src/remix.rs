//! Latent-space interpolation of two relation statements.
//!
//! Both inputs are padded to a common length, encoded separately up to layer
//! `m`, combined token-wise as `lambda * h + (1 - lambda) * h'`, and the
//! combination is pushed through layers `m+1..=L`. The virtual point is read
//! out at the classification token; marker positions are meaningless for it.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelDistribution;
use crate::encoder::{EncodedInput, RelationModel, ReprMode, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub alpha: f64,
    pub beta: f64,
    /// Candidate interpolation layers, 1-based.
    pub layer_set: Vec<usize>,
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            alpha: 60.0,
            beta: 60.0,
            layer_set: vec![2, 3, 4],
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "Beta shapes must be positive and finite, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        if self.layer_set.is_empty() {
            return Err(Error::Config("mixup layer set is empty".into()));
        }
        if let Some(&m) = self.layer_set.iter().find(|&&m| m == 0 || m > num_layers) {
            return Err(Error::Config(format!(
                "mixup layer {m} outside [1, {num_layers}]"
            )));
        }
        Ok(())
    }

    /// Mean of the mixing coefficient, `alpha / (alpha + beta)`.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// One virtual training point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedBatchItem {
    pub lambda: f64,
    pub layer: usize,
    pub source_pair: (usize, usize),
    pub mixed_label: Vec<f64>,
}

/// Draws `lambda ~ Beta(alpha, beta)` as `X / (X + Y)` with
/// `X ~ Gamma(alpha, 1)` and `Y ~ Gamma(beta, 1)`.
pub fn sample_lambda<R: Rng + ?Sized>(spec: &MixSpec, rng: &mut R) -> f64 {
    let x = Gamma::new(spec.alpha, 1.0).expect("validated shape").sample(rng);
    let y = Gamma::new(spec.beta, 1.0).expect("validated shape").sample(rng);
    x / (x + y)
}

/// Uniform draw from the layer set.
pub fn sample_layer<R: Rng + ?Sized>(spec: &MixSpec, rng: &mut R) -> usize {
    spec.layer_set[rng.random_range(0..spec.layer_set.len())]
}

/// Weights `(w, w')` with `w ~ lambda` and `w' ~ 1 - lambda`.
///
/// The larger weight is taken as given and the smaller one is derived as its
/// complement, which makes the map exactly antisymmetric:
/// `mix_weights(1 - l) == swap(mix_weights(l))` bit-for-bit, so swapping the
/// two inputs and replacing `l` by `1 - l` reproduces the same arithmetic.
pub fn mix_weights(lambda: f64) -> (f64, f64) {
    if lambda >= 0.5 {
        (lambda, 1.0 - lambda)
    } else {
        let other = 1.0 - lambda;
        (1.0 - other, other)
    }
}

/// Entrywise `lambda * y + (1 - lambda) * y'`.
pub fn mix_labels<F: Scalar>(
    y: &LabelDistribution<F>,
    y_other: &LabelDistribution<F>,
    lambda: f64,
) -> Result<LabelDistribution<F>> {
    if y.len() != y_other.len() {
        return Err(Error::Shape(format!(
            "mixing distributions of length {} and {}",
            y.len(),
            y_other.len()
        )));
    }
    let (w, w_other) = mix_weights(lambda);
    let (w, w_other) = (F::of(w), F::of(w_other));
    let probs = y
        .probs()
        .iter()
        .zip(y_other.probs())
        .map(|(&a, &b)| w * a + w_other * b)
        .collect();
    Ok(LabelDistribution::new_unchecked(probs))
}

fn check_layer<F: Scalar>(model: &RelationModel<F>, layer: usize) -> Result<()> {
    let allowed = &model.config().mixup_layers;
    if !allowed.contains(&layer) {
        return Err(Error::LayerNotInMixSet {
            layer,
            allowed: allowed.clone(),
        });
    }
    Ok(())
}

/// Records the interpolated forward pass on `tape`; returns the final-layer
/// states of the virtual point and its attention mask.
///
/// The mask is the union of the masks of the sources that carry non-zero
/// weight, so at `lambda` in `{0, 1}` the pass is exactly the plain forward
/// pass of the surviving input.
pub fn remix_states<F: Scalar>(
    model: &RelationModel<F>,
    tape: &mut Tape<'_, F>,
    x: &EncodedInput,
    x_other: &EncodedInput,
    lambda: f64,
    layer: usize,
) -> Result<(Var, Vec<bool>)> {
    check_layer(model, layer)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixing coefficient {lambda} outside [0, 1]")));
    }
    let len = x.len().max(x_other.len());
    let (a, b) = (x.padded(len), x_other.padded(len));
    let (mask_a, mask_b): (Arc<[bool]>, Arc<[bool]>) = (a.mask().into(), b.mask().into());

    let ha = model.embed(tape, &a)?;
    let hb = model.embed(tape, &b)?;
    let (ha, hb) = if layer > 0 {
        let ha = *model.forward_layers(tape, ha, &mask_a, 0, layer)?.last().expect("layer >= 1");
        let hb = *model.forward_layers(tape, hb, &mask_b, 0, layer)?.last().expect("layer >= 1");
        (ha, hb)
    } else {
        (ha, hb)
    };

    let (w, w_other) = mix_weights(lambda);
    let mixed = tape.mix(ha, F::of(w), hb, F::of(w_other))?;
    let mask: Vec<bool> = mask_a
        .iter()
        .zip(mask_b.iter())
        .map(|(&p, &q)| (p && w != 0.0) || (q && w_other != 0.0))
        .collect();

    let layers = model.num_layers();
    if layer == layers {
        return Ok((mixed, mask));
    }
    let shared: Arc<[bool]> = mask.clone().into();
    let last = *model
        .forward_layers(tape, mixed, &shared, layer, layers)?
        .last()
        .expect("layer < L");
    Ok((last, mask))
}

/// Classifier logits of the virtual point, read at the classification token.
pub fn remix_logits<F: Scalar>(
    model: &RelationModel<F>,
    tape: &mut Tape<'_, F>,
    x: &EncodedInput,
    x_other: &EncodedInput,
    lambda: f64,
    layer: usize,
) -> Result<Var> {
    if model.config().repr_mode != ReprMode::Cls {
        return Err(Error::Config(
            "interpolated points need the classification-token representation (repr_mode = cls)"
                .into(),
        ));
    }
    let (last, _) = remix_states(model, tape, x, x_other, lambda, layer)?;
    let repr = tape.rows_concat(last, &[0])?;
    model.classifier_logits(tape, repr)
}

/// Final-layer states of the virtual point (value-level).
pub fn remix_forward<F: Scalar>(
    model: &RelationModel<F>,
    x: &EncodedInput,
    x_other: &EncodedInput,
    lambda: f64,
    layer: usize,
) -> Result<(Array2<F>, Vec<bool>)> {
    let mut tape = model.tape();
    let (last, mask) = remix_states(model, &mut tape, x, x_other, lambda, layer)?;
    Ok((tape.value(last).clone(), mask))
}
