//! Back-translation with entity retention.
//!
//! A statement is translated into a pivot language with plain beam search
//! (optionally sampling among the finalists) and translated back with a
//! constrained decoder that must reproduce the head and tail phrases. The
//! entity spans of the paraphrase are re-located where the decoder matched
//! them.

mod beam;
mod cache;
mod toy;

use std::collections::HashMap;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationStatement;
use crate::error::{Error, Result};

pub use beam::{beam_search, constrained_beam_search, BeamHypothesis, Coverage};
pub use cache::{load_augmentation_cache, read_augmentation_cache, write_augmentation_cache, CacheEntry};
pub use toy::{parse_table, read_table, AlignedModel, Reorder, ToyPivot};

/// End-of-sequence token shared by every toy vocabulary.
pub const EOS: &str = "</s>";

/// Dense target vocabulary of a translation model, including its
/// end-of-sequence token.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    eos: usize,
}

impl TargetVocab {
    /// Deduplicates `tokens` (keeping first occurrences) and appends [`EOS`]
    /// if absent.
    pub fn new(tokens: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for t in tokens.into_iter().map(Into::into).chain([EOS.to_string()]) {
            if !index.contains_key(&t) {
                index.insert(t.clone(), list.len());
                list.push(t);
            }
        }
        let eos = index[EOS];
        Self { tokens: list, index, eos }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> usize {
        self.eos
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}

/// Next-token distribution of a sequence-to-sequence model.
pub trait TranslationModel: Send + Sync {
    fn vocab(&self) -> &TargetVocab;

    /// Log-probabilities over the whole target vocabulary for the token
    /// following `prefix`. Must be deterministic in `(source, prefix)`.
    fn log_probs(&self, source: &[String], prefix: &[usize]) -> Vec<f64>;
}

/// A pair of models translating into a pivot language and back.
#[derive(Clone)]
pub struct Pivot {
    pub name: String,
    pub forward: Arc<dyn TranslationModel>,
    pub backward: Arc<dyn TranslationModel>,
}

impl std::fmt::Debug for Pivot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pivot").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Phrases the back-translation must reproduce: head then tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    phrases: Vec<Vec<String>>,
}

impl ConstraintSet {
    pub fn new(phrases: Vec<Vec<String>>) -> Result<Self> {
        if phrases.iter().any(Vec::is_empty) {
            return Err(Error::Config("constraint phrases must be non-empty".into()));
        }
        Ok(Self { phrases })
    }

    pub fn empty() -> Self {
        Self { phrases: Vec::new() }
    }

    pub fn from_statement(stmt: &RelationStatement) -> Self {
        Self {
            phrases: vec![stmt.head_tokens().to_vec(), stmt.tail_tokens().to_vec()],
        }
    }

    pub fn phrases(&self) -> &[Vec<String>] {
        &self.phrases
    }

    pub fn total_len(&self) -> usize {
        self.phrases.iter().map(Vec::len).sum()
    }

    /// Maps the phrases to ids of `vocab`; fails if a token cannot be produced.
    pub fn to_ids(&self, vocab: &TargetVocab) -> Result<Vec<Vec<usize>>> {
        self.phrases
            .iter()
            .map(|p| {
                p.iter()
                    .map(|t| {
                        vocab.id(t).ok_or_else(|| {
                            Error::Translation(format!("constraint token {t:?} not in target vocabulary"))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Decoder settings for one back-translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackTranslateConfig {
    pub beam: usize,
    /// Output may exceed the source length by this many tokens.
    pub extra_len: usize,
    /// Softmax temperature over forward finalists; 0 picks the best.
    pub temperature: f64,
}

impl Default for BackTranslateConfig {
    fn default() -> Self {
        Self {
            beam: 6,
            extra_len: 4,
            temperature: 1.0,
        }
    }
}

/// Picks one finalist: argmax at temperature 0, otherwise a draw from the
/// softmax of `score / temperature`.
pub fn sample_finalist<R: Rng + ?Sized>(
    finalists: &[BeamHypothesis],
    temperature: f64,
    rng: &mut R,
) -> Option<usize> {
    if finalists.is_empty() {
        return None;
    }
    if temperature <= 0.0 || finalists.len() == 1 {
        return Some(0);
    }
    let best = finalists[0].score;
    let weights: Vec<f64> = finalists
        .iter()
        .map(|h| ((h.score - best) / temperature).exp())
        .collect();
    let dist = WeightedIndex::new(&weights).ok()?;
    Some(dist.sample(rng))
}

/// Translates `stmt` through `pivot` and back, keeping both entity phrases.
pub fn back_translate<R: Rng + ?Sized>(
    stmt: &RelationStatement,
    pivot: &Pivot,
    config: &BackTranslateConfig,
    rng: &mut R,
) -> Result<RelationStatement> {
    let source = stmt.tokens();
    let fwd_len = source.len() + config.extra_len;
    let finalists = beam_search(pivot.forward.as_ref(), source, config.beam, fwd_len)?;
    let pick = sample_finalist(&finalists, config.temperature, rng)
        .ok_or_else(|| Error::Translation(format!("pivot {} produced no output", pivot.name)))?;
    let middle = pivot.forward.vocab().decode(&finalists[pick].tokens);

    let constraints = ConstraintSet::from_statement(stmt);
    let back_vocab = pivot.backward.vocab();
    let ids = constraints.to_ids(back_vocab)?;
    let max_len = middle.len().max(source.len()) + config.extra_len;
    let beam = config.beam.max(constraints.total_len() + 1);
    let out = constrained_beam_search(pivot.backward.as_ref(), &middle, &ids, beam, max_len)?;

    let spans = beam::Automaton::new(&ids)
        .locate(&out.tokens)
        .ok_or_else(|| Error::Translation("decoded output lost a constraint".into()))?;
    stmt.with_tokens(back_vocab.decode(&out.tokens), spans[0].clone(), spans[1].clone())
}

/// Outcome of augmenting one statement.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub statements: Vec<RelationStatement>,
    /// Pivots whose decode failed and were replaced by the original.
    pub fallbacks: usize,
}

/// One back-translation per pivot; a failed pivot contributes a copy of
/// `stmt` instead.
pub fn generate_augmentations(
    stmt: &RelationStatement,
    pivots: &[Pivot],
    config: &BackTranslateConfig,
    seed: u64,
) -> Augmented {
    let mut fallbacks = 0;
    let statements = pivots
        .iter()
        .enumerate()
        .map(|(k, pivot)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            back_translate(stmt, pivot, config, &mut rng).unwrap_or_else(|_| {
                fallbacks += 1;
                stmt.clone()
            })
        })
        .collect();
    Augmented { statements, fallbacks }
}

/// Corpus-level summary of an augmentation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub statements: usize,
    pub decodes: usize,
    pub satisfied: usize,
    pub fallbacks: usize,
}

/// Augments every statement in parallel. Statement `i` is decoded with a
/// seed derived from `(seed, i)`, so results do not depend on scheduling.
pub fn augment_corpus(
    data: &[RelationStatement],
    pivots: &[Pivot],
    config: &BackTranslateConfig,
    seed: u64,
) -> (Vec<Augmented>, AugmentSummary) {
    let out: Vec<Augmented> = data
        .par_iter()
        .enumerate()
        .map(|(i, stmt)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            generate_augmentations(stmt, pivots, config, rng.random())
        })
        .collect();
    let decodes = data.len() * pivots.len();
    let fallbacks = out.iter().map(|a| a.fallbacks).sum();
    let summary = AugmentSummary {
        statements: data.len(),
        decodes,
        satisfied: decodes - fallbacks,
        fallbacks,
    };
    (out, summary)
}
