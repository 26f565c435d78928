//! Post-norm transformer relation encoder with a two-layer classifier head.
//!
//! Layer 0 of the hidden stack is the embedding output (token + learned
//! position embeddings, layer-normalized); layers `1..=L` are the outputs of
//! the transformer blocks. Each block is
//! `h = LN(x + MHA(x)); out = LN(h + W2 gelu(W1 h))`. The classifier is
//! `W2 gelu(W1 r + b1) + b2` followed by softmax. Dropout is not used.

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::{EncoderConfig, ReprMode};
use super::params::{ParamId, ParamStore};
use super::tape::{softmax, Tape, Var};
use super::vocab::EncodedInput;
use crate::corpus::LabelDistribution;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
struct BlockParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    attn_norm_gain: ParamId,
    attn_norm_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ffn_norm_gain: ParamId,
    ffn_norm_bias: ParamId,
}

#[derive(Debug, Clone)]
struct ModelParams {
    token_embedding: ParamId,
    position_embedding: ParamId,
    embed_norm_gain: ParamId,
    embed_norm_bias: ParamId,
    blocks: Vec<BlockParams>,
    cls_w1: ParamId,
    cls_b1: ParamId,
    cls_w2: ParamId,
    cls_b2: ParamId,
}

/// Token representations at every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStack<F> {
    /// `states[l]` is the `seq_len x model_dim` output of layer `l`.
    pub states: Vec<Array2<F>>,
    pub mask: Vec<bool>,
}

impl<F: Scalar> HiddenStack<F> {
    pub fn last(&self) -> &Array2<F> {
        self.states.last().expect("non-empty stack")
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Fixed-length relation representation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationRepr<F> {
    pub vector: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct RelationModel<F: Scalar> {
    config: EncoderConfig,
    store: ParamStore<F>,
    ids: ModelParams,
}

fn linear_init<F: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_fn((fan_in, fan_out), |_| F::of(dist.sample(rng)))
}

fn normal_init<F: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<F> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| F::of(dist.sample(rng)))
}

impl<F: Scalar> RelationModel<F> {
    /// Randomly initialised model, deterministic in `config.init_seed`.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let d = config.model_dim;
        let zeros = |cols: usize| Array2::<F>::zeros((1, cols));
        let ones = |cols: usize| Array2::<F>::ones((1, cols));

        let token_embedding = store.add(
            "embed.token",
            normal_init(&mut rng, config.vocab_size, d, 1.0),
            true,
        );
        let position_embedding = store.add(
            "embed.position",
            normal_init(&mut rng, config.max_seq_len, d, 1.0),
            true,
        );
        let embed_norm_gain = store.add("embed.norm.gain", ones(d), false);
        let embed_norm_bias = store.add("embed.norm.bias", zeros(d), false);

        let mut blocks = Vec::with_capacity(config.num_layers);
        for l in 1..=config.num_layers {
            let p = |n: &str| format!("layer{l}.{n}");
            blocks.push(BlockParams {
                wq: store.add(p("attn.wq"), linear_init(&mut rng, d, d), true),
                bq: store.add(p("attn.bq"), zeros(d), false),
                wk: store.add(p("attn.wk"), linear_init(&mut rng, d, d), true),
                bk: store.add(p("attn.bk"), zeros(d), false),
                wv: store.add(p("attn.wv"), linear_init(&mut rng, d, d), true),
                bv: store.add(p("attn.bv"), zeros(d), false),
                wo: store.add(p("attn.wo"), linear_init(&mut rng, d, d), true),
                bo: store.add(p("attn.bo"), zeros(d), false),
                attn_norm_gain: store.add(p("attn.norm.gain"), ones(d), false),
                attn_norm_bias: store.add(p("attn.norm.bias"), zeros(d), false),
                w1: store.add(p("ffn.w1"), linear_init(&mut rng, d, config.ffn_dim), true),
                b1: store.add(p("ffn.b1"), zeros(config.ffn_dim), false),
                w2: store.add(p("ffn.w2"), linear_init(&mut rng, config.ffn_dim, d), true),
                b2: store.add(p("ffn.b2"), zeros(d), false),
                ffn_norm_gain: store.add(p("ffn.norm.gain"), ones(d), false),
                ffn_norm_bias: store.add(p("ffn.norm.bias"), zeros(d), false),
            });
        }

        let repr = config.repr_dim();
        let hidden = config.classifier_hidden;
        let cls_w1 = store.add("classifier.w1", linear_init(&mut rng, repr, hidden), true);
        let cls_b1 = store.add("classifier.b1", zeros(hidden), false);
        let cls_w2 = store.add(
            "classifier.w2",
            linear_init(&mut rng, hidden, config.num_classes),
            true,
        );
        let cls_b2 = store.add("classifier.b2", zeros(config.num_classes), false);

        Ok(Self {
            config,
            store,
            ids: ModelParams {
                token_embedding,
                position_embedding,
                embed_norm_gain,
                embed_norm_bias,
                blocks,
                cls_w1,
                cls_b1,
                cls_w2,
                cls_b2,
            },
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn tape(&self) -> Tape<'_, F> {
        Tape::new(&self.store)
    }

    fn eps(&self) -> F {
        F::of(self.config.layer_norm_eps)
    }

    fn check_input(&self, input: &EncodedInput) -> Result<()> {
        if input.len() > self.config.max_seq_len {
            return Err(Error::Overlength {
                len: input.len(),
                max: self.config.max_seq_len,
            });
        }
        if input.is_empty() || input.valid_len == 0 || input.valid_len > input.len() {
            return Err(Error::Shape(format!(
                "input of {} ids with {} valid",
                input.len(),
                input.valid_len
            )));
        }
        Ok(())
    }

    /// Layer-0 states: normalized token plus position embeddings.
    pub fn embed(&self, tape: &mut Tape<'_, F>, input: &EncodedInput) -> Result<Var> {
        self.check_input(input)?;
        let tok_table = tape.param(self.ids.token_embedding);
        let pos_table = tape.param(self.ids.position_embedding);
        let tok = tape.gather(tok_table, &input.ids)?;
        let positions: Vec<usize> = (0..input.len()).collect();
        let pos = tape.gather(pos_table, &positions)?;
        let sum = tape.add(tok, pos)?;
        let g = tape.param(self.ids.embed_norm_gain);
        let b = tape.param(self.ids.embed_norm_bias);
        tape.layer_norm(sum, g, b, self.eps())
    }

    fn affine(&self, tape: &mut Tape<'_, F>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = tape.param(w);
        let b = tape.param(b);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }

    fn block(
        &self,
        tape: &mut Tape<'_, F>,
        p: &BlockParams,
        x: Var,
        mask: &Arc<[bool]>,
    ) -> Result<Var> {
        let heads = self.config.num_heads;
        let dh = self.config.head_dim();
        let q = self.affine(tape, x, p.wq, p.bq)?;
        let k = self.affine(tape, x, p.wk, p.bk)?;
        let v = self.affine(tape, x, p.wv, p.bv)?;
        let scale = F::one() / F::of(dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.masked_softmax(scores, mask.clone())?;
            outs.push(tape.matmul(weights, vh)?);
        }
        let attn = if heads == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        let attn = self.affine(tape, attn, p.wo, p.bo)?;
        let res = tape.add(x, attn)?;
        let g = tape.param(p.attn_norm_gain);
        let b = tape.param(p.attn_norm_bias);
        let h = tape.layer_norm(res, g, b, self.eps())?;

        let inner = self.affine(tape, h, p.w1, p.b1)?;
        let inner = tape.gelu(inner);
        let ffn = self.affine(tape, inner, p.w2, p.b2)?;
        let res = tape.add(h, ffn)?;
        let g = tape.param(p.ffn_norm_gain);
        let b = tape.param(p.ffn_norm_bias);
        tape.layer_norm(res, g, b, self.eps())
    }

    /// Applies blocks `from+1..=to` to the layer-`from` states `h`.
    /// Returns the states of layers `from+1..=to` in order.
    pub fn forward_layers(
        &self,
        tape: &mut Tape<'_, F>,
        h: Var,
        mask: &Arc<[bool]>,
        from: usize,
        to: usize,
    ) -> Result<Vec<Var>> {
        if from >= to || to > self.config.num_layers {
            return Err(Error::LayerRange {
                from,
                to,
                layers: self.config.num_layers,
            });
        }
        let shape = tape.value(h).shape().to_vec();
        if shape[1] != self.config.model_dim || shape[0] != mask.len() {
            return Err(Error::Shape(format!(
                "hidden states {:?} with a {}-entry mask for model_dim {}",
                shape,
                mask.len(),
                self.config.model_dim
            )));
        }
        let mut states = Vec::with_capacity(to - from);
        let mut cur = h;
        for p in &self.ids.blocks[from..to] {
            cur = self.block(tape, p, cur, mask)?;
            states.push(cur);
        }
        Ok(states)
    }

    /// Final-layer states of a full forward pass.
    pub fn encode_states(&self, tape: &mut Tape<'_, F>, input: &EncodedInput) -> Result<Var> {
        let h0 = self.embed(tape, input)?;
        let mask: Arc<[bool]> = input.mask().into();
        let states = self.forward_layers(tape, h0, &mask, 0, self.config.num_layers)?;
        Ok(*states.last().expect("at least one layer"))
    }

    /// Relation representation read from final-layer states.
    pub fn relation_repr(
        &self,
        tape: &mut Tape<'_, F>,
        last: Var,
        input: &EncodedInput,
        mode: ReprMode,
    ) -> Result<Var> {
        match mode {
            ReprMode::Cls => tape.rows_concat(last, &[0]),
            ReprMode::MarkerConcat => {
                tape.rows_concat(last, &[input.head_marker_pos, input.tail_marker_pos])
            }
        }
    }

    /// Classifier logits, `1 x num_classes`.
    pub fn classifier_logits(&self, tape: &mut Tape<'_, F>, repr: Var) -> Result<Var> {
        let width = tape.value(repr).ncols();
        if width != self.config.repr_dim() {
            return Err(Error::Shape(format!(
                "relation representation of width {width}, classifier expects {}",
                self.config.repr_dim()
            )));
        }
        let hidden = self.affine(tape, repr, self.ids.cls_w1, self.ids.cls_b1)?;
        let hidden = tape.gelu(hidden);
        self.affine(tape, hidden, self.ids.cls_w2, self.ids.cls_b2)
    }

    /// Logits for one input using the configured representation mode.
    pub fn logits(&self, tape: &mut Tape<'_, F>, input: &EncodedInput) -> Result<Var> {
        let last = self.encode_states(tape, input)?;
        let repr = self.relation_repr(tape, last, input, self.config.repr_mode)?;
        self.classifier_logits(tape, repr)
    }

    // ---- value-level API ----

    /// Every layer's states for one input.
    pub fn hidden_stack(&self, input: &EncodedInput) -> Result<HiddenStack<F>> {
        let mut tape = self.tape();
        let h0 = self.embed(&mut tape, input)?;
        let mask: Arc<[bool]> = input.mask().into();
        let rest = self.forward_layers(&mut tape, h0, &mask, 0, self.config.num_layers)?;
        let states = std::iter::once(h0)
            .chain(rest)
            .map(|v| tape.value(v).clone())
            .collect();
        Ok(HiddenStack {
            states,
            mask: input.mask(),
        })
    }

    /// Applies layers `from+1..=to` to layer-`from` states; returns those layers' states.
    pub fn forward_range(
        &self,
        h: &Array2<F>,
        mask: &[bool],
        from: usize,
        to: usize,
    ) -> Result<Vec<Array2<F>>> {
        let mut tape = self.tape();
        let hv = tape.constant(h.clone());
        let mask: Arc<[bool]> = mask.into();
        let states = self.forward_layers(&mut tape, hv, &mask, from, to)?;
        Ok(states.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    pub fn encode(&self, input: &EncodedInput) -> Result<RelationRepr<F>> {
        let mut tape = self.tape();
        let last = self.encode_states(&mut tape, input)?;
        let repr = self.relation_repr(&mut tape, last, input, self.config.repr_mode)?;
        Ok(RelationRepr {
            vector: tape.value(repr).row(0).to_vec(),
        })
    }

    pub fn classify(&self, repr: &RelationRepr<F>) -> Result<LabelDistribution<F>> {
        let mut tape = self.tape();
        let r = tape.constant(
            Array2::from_shape_vec((1, repr.vector.len()), repr.vector.clone())
                .expect("row vector"),
        );
        let logits = self.classifier_logits(&mut tape, r)?;
        Ok(distribution_of(tape.value(logits)))
    }

    /// `p(relation | input)` under the configured representation mode.
    pub fn predict(&self, input: &EncodedInput) -> Result<LabelDistribution<F>> {
        let mut tape = self.tape();
        let logits = self.logits(&mut tape, input)?;
        Ok(distribution_of(tape.value(logits)))
    }
}

/// Softmax of a `1 x C` logit row.
pub fn distribution_of<F: Scalar>(logits: &Array2<F>) -> LabelDistribution<F> {
    LabelDistribution::new_unchecked(softmax(logits.row(0).as_slice().expect("contiguous row")))
}
