//! Deterministic stand-ins for neural translation models.
//!
//! Every toy model is position-aligned: the distribution for output position
//! `i` is built from the (possibly reordered) source token at `i`, and the
//! end-of-sequence token is expected right after the last source token. A
//! small uniform floor keeps every token reachable, which the constrained
//! decoder relies on when it has to force an entity back in.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Pivot, TargetVocab, TranslationModel};
use crate::error::{Error, Result};

/// Probability mass spread uniformly over the vocabulary.
const FLOOR_MASS: f64 = 1e-3;
/// Mass the backward cipher model gives to synonyms of the decoded word.
const BACK_SYNONYM_MASS: f64 = 0.05;
const CLAUSE_BREAKS: [&str; 4] = [",", ";", ":", "."];

/// Source-side reordering applied before alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reorder {
    None,
    /// Shuffles the tokens between punctuation marks, seeded by the clause.
    ClauseShuffle { seed: u64 },
}

impl Reorder {
    fn apply<'a>(&self, source: &'a [String]) -> Vec<&'a String> {
        let mut out: Vec<&String> = source.iter().collect();
        let Reorder::ClauseShuffle { seed } = *self else {
            return out;
        };
        let mut start = 0;
        for i in 0..=out.len() {
            let boundary = i == out.len() || CLAUSE_BREAKS.contains(&out[i].as_str());
            if boundary {
                let clause = &mut out[start..i];
                let key = clause.iter().fold(seed, |h, t| stable_hash(h, t));
                clause.shuffle(&mut ChaCha8Rng::seed_from_u64(key));
                start = i + 1;
            }
        }
        out
    }
}

/// A position-aligned model with a fixed source-token to target-weights table.
#[derive(Debug, Clone)]
pub struct AlignedModel {
    vocab: TargetVocab,
    entries: HashMap<String, Vec<(usize, f64)>>,
    reorder: Reorder,
}

impl AlignedModel {
    pub fn new(vocab: TargetVocab, entries: HashMap<String, Vec<(usize, f64)>>, reorder: Reorder) -> Self {
        Self {
            vocab,
            entries,
            reorder,
        }
    }
}

impl TranslationModel for AlignedModel {
    fn vocab(&self) -> &TargetVocab {
        &self.vocab
    }

    fn log_probs(&self, source: &[String], prefix: &[usize]) -> Vec<f64> {
        let v = self.vocab.len();
        let mut probs = vec![FLOOR_MASS / v as f64; v];
        let src = self.reorder.apply(source);
        let eos = [(self.vocab.eos(), 1.0)];
        let weights: &[(usize, f64)] = match src.get(prefix.len()) {
            Some(tok) => self.entries.get(tok.as_str()).map_or(&[], Vec::as_slice),
            None => &eos,
        };
        let total: f64 = weights.iter().map(|w| w.1).sum();
        if total > 0.0 {
            for &(id, w) in weights {
                probs[id] += (1.0 - FLOOR_MASS) * w / total;
            }
        } else {
            probs.iter_mut().for_each(|p| *p = 1.0 / v as f64);
        }
        probs.into_iter().map(f64::ln).collect()
    }
}

/// Constructors for the reference pivots.
pub struct ToyPivot;

impl ToyPivot {
    /// Both directions copy the input.
    pub fn identity<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Pivot {
        let model = Arc::new(copy_model(token_set(tokens), Reorder::None));
        Pivot {
            name: "identity".into(),
            forward: model.clone(),
            backward: model,
        }
    }

    /// Shuffles tokens within each clause on the way out, copies on the way back.
    pub fn clause_shuffle<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>, seed: u64) -> Pivot {
        let set = token_set(tokens);
        Pivot {
            name: "shuffle".into(),
            forward: Arc::new(copy_model(set.clone(), Reorder::ClauseShuffle { seed })),
            backward: Arc::new(copy_model(set, Reorder::None)),
        }
    }

    /// Invertible token substitution with synonym noise.
    ///
    /// Words found in `substitution` map to its first value, all others to
    /// `"{name}:{word}"`. On the way out a word with synonyms keeps its own
    /// cipher with probability `1 - d` and moves to a synonym's cipher with
    /// probability `d`, where `d` is `noise` jittered per word by `seed`. On
    /// the way back the cipher is inverted, with a little mass on synonyms.
    pub fn cipher<S: AsRef<str>>(
        name: &str,
        tokens: impl IntoIterator<Item = S>,
        substitution: &BTreeMap<String, Vec<String>>,
        synonyms: &BTreeMap<String, Vec<String>>,
        noise: f64,
        seed: u64,
    ) -> Result<Pivot> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::Config(format!("synonym noise {noise} outside [0, 1)")));
        }
        let mut words = token_set(tokens);
        for (w, syns) in synonyms {
            words.insert(w.clone());
            words.extend(syns.iter().cloned());
        }
        let encode = |w: &str| -> String {
            substitution
                .get(w)
                .and_then(|v| v.first().cloned())
                .unwrap_or_else(|| format!("{name}:{w}"))
        };
        let ciphers: Vec<String> = words.iter().map(|w| encode(w)).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = ciphers.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Config(format!("substitution table is not invertible at {dup:?}")));
        }
        let syns_of = |w: &str| -> Vec<&String> {
            synonyms
                .get(w)
                .map(|s| s.iter().filter(|x| x.as_str() != w).collect())
                .unwrap_or_default()
        };

        let fwd_vocab = TargetVocab::new(ciphers.iter().cloned());
        let back_vocab = TargetVocab::new(words.iter().cloned());
        let mut fwd = HashMap::new();
        let mut back = HashMap::new();
        for (w, c) in words.iter().zip(&ciphers) {
            let syns = syns_of(w);
            let id = |t: &str| fwd_vocab.id(&encode(t)).expect("cipher of a known word");
            let mut out = vec![(id(w), 1.0)];
            if !syns.is_empty() {
                let jitter = 0.75 + 0.5 * unit(stable_hash(seed, w));
                let d = (noise * jitter).min(0.95);
                out[0].1 = 1.0 - d;
                out.extend(syns.iter().map(|s| (id(s), d / syns.len() as f64)));
            }
            fwd.insert(w.clone(), out);

            let bid = |t: &str| back_vocab.id(t).expect("known word");
            let mut inv = vec![(bid(w), 1.0)];
            if !syns.is_empty() {
                inv[0].1 = 1.0 - BACK_SYNONYM_MASS;
                inv.extend(
                    syns.iter()
                        .map(|s| (bid(s), BACK_SYNONYM_MASS / syns.len() as f64)),
                );
            }
            back.insert(c.clone(), inv);
        }
        Ok(Pivot {
            name: name.to_string(),
            forward: Arc::new(AlignedModel::new(fwd_vocab, fwd, Reorder::None)),
            backward: Arc::new(AlignedModel::new(back_vocab, back, Reorder::None)),
        })
    }
}

fn token_set<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> BTreeSet<String> {
    tokens.into_iter().map(|t| t.as_ref().to_string()).collect()
}

fn copy_model(tokens: BTreeSet<String>, reorder: Reorder) -> AlignedModel {
    let vocab = TargetVocab::new(tokens.iter().cloned());
    let entries = tokens
        .into_iter()
        .map(|t| {
            let id = vocab.id(&t).expect("own token");
            (t, vec![(id, 1.0)])
        })
        .collect();
    AlignedModel::new(vocab, entries, reorder)
}

/// FNV-1a over `text`, keyed by `seed` and finished with a splitmix64 round.
pub(crate) fn stable_hash(seed: u64, text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Parses `key value...` lines; `#` starts a comment.
pub fn parse_table(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace().map(str::to_string);
        let key = fields.next().expect("non-empty line");
        let values: Vec<String> = fields.collect();
        let err = |message: String| Error::Parse { line: i + 1, message };
        if values.is_empty() {
            return Err(err(format!("{key:?} has no mapping")));
        }
        if out.insert(key.clone(), values).is_some() {
            return Err(err(format!("duplicate entry for {key:?}")));
        }
    }
    Ok(out)
}

pub fn read_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text)
}
