use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::FormattedInput;
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Reserved tokens, in id order.
pub const SPECIAL_TOKENS: [&str; 7] = [PAD, UNK, "[CLS]", "[E1]", "[/E1]", "[E2]", "[/E2]"];

/// Word-level token vocabulary: specials first, then corpus tokens sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TokenVocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

/// Encoder input ids, possibly padded past `valid_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<usize>,
    pub valid_len: usize,
    pub head_marker_pos: usize,
    pub tail_marker_pos: usize,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.valid_len).collect()
    }

    /// Copy padded with `[PAD]` up to `len` positions.
    pub fn padded(&self, len: usize) -> Self {
        let mut ids = self.ids.clone();
        if ids.len() < len {
            ids.resize(len, PAD_ID);
        }
        Self { ids, ..self.clone() }
    }
}

impl TokenVocab {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a FormattedInput>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut any = false;
        for input in corpus {
            any = true;
            for t in &input.tokens {
                if !SPECIAL_TOKENS.contains(&t.as_str()) {
                    seen.insert(t.as_str());
                }
            }
        }
        if !any {
            return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
        }
        let tokens: Vec<String> = SPECIAL_TOKENS
            .iter()
            .copied()
            .chain(seen)
            .map(str::to_owned)
            .collect();
        Ok(tokens.into())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, input: &FormattedInput) -> EncodedInput {
        EncodedInput {
            ids: input.tokens.iter().map(|t| self.id(t)).collect(),
            valid_len: input.tokens.len(),
            head_marker_pos: input.head_marker_pos,
            tail_marker_pos: input.tail_marker_pos,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{format_entity_markers, RelationStatement};

    fn formatted(text: &str) -> FormattedInput {
        format_entity_markers(&RelationStatement::from_text(text, 0..1, 2..3, None).unwrap())
    }

    #[test]
    fn five_words_plus_specials() {
        let v = TokenVocab::build([&formatted("alpha beta gamma delta eps")]).unwrap();
        assert_eq!(v.len(), 5 + SPECIAL_TOKENS.len());
        assert_eq!(v.id(PAD), 0);
        assert_eq!(v.id("never-seen"), UNK_ID);
    }

    #[test]
    fn construction_ignores_corpus_order() {
        let a = formatted("x y z w");
        let b = formatted("w q x r");
        let v1 = TokenVocab::build([&a, &b]).unwrap();
        let v2 = TokenVocab::build([&b, &a]).unwrap();
        assert_eq!(v1, v2);
        assert!(TokenVocab::build(std::iter::empty()).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_the_index() {
        let v = TokenVocab::build([&formatted("a b c")]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: TokenVocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back.id("b"), v.id("b"));
    }
}
