//! Relation statements, label vocabularies and label distributions, plus
//! ingestion, input formatting, splitting and dataset statistics.

mod format;
mod io;
mod split;
mod stats;

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use format::{format_entity_markers, format_input, format_type_markers, type_phrase, FormattedInput, MarkerScheme};
pub use io::{load_jsonl, parse_jsonl, read_split_manifest, to_jsonl, write_jsonl, write_split_manifest, SplitManifest};
pub use split::{stratified_split, Split, SplitSpec};
pub use stats::{dataset_stats, DatasetStats};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default name of the no-relation class.
pub const NA: &str = "no_relation";

/// A sentence with head and tail entity spans (half-open token ranges).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "StatementRecord", into = "StatementRecord")]
pub struct RelationStatement {
    tokens: Vec<String>,
    head: Range<usize>,
    tail: Range<usize>,
    head_type: Option<String>,
    tail_type: Option<String>,
    label: Option<String>,
}

/// Wire form of a statement: one JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatementRecord {
    tokens: Vec<String>,
    head: [usize; 2],
    tail: [usize; 2],
    #[serde(default)]
    head_type: Option<String>,
    #[serde(default)]
    tail_type: Option<String>,
    #[serde(default)]
    relation: Option<String>,
}

impl TryFrom<StatementRecord> for RelationStatement {
    type Error = String;

    fn try_from(r: StatementRecord) -> Result<Self, String> {
        RelationStatement::new(
            r.tokens,
            r.head[0]..r.head[1],
            r.tail[0]..r.tail[1],
            r.head_type,
            r.tail_type,
            r.relation,
        )
        .map_err(|e| e.to_string())
    }
}

impl From<RelationStatement> for StatementRecord {
    fn from(s: RelationStatement) -> Self {
        StatementRecord {
            tokens: s.tokens,
            head: [s.head.start, s.head.end],
            tail: [s.tail.start, s.tail.end],
            head_type: s.head_type,
            tail_type: s.tail_type,
            relation: s.label,
        }
    }
}

fn check_span(name: &str, span: &Range<usize>, len: usize) -> Result<()> {
    if span.start >= span.end {
        return Err(Error::InvalidStatement(format!("{name} span [{}, {}) is empty", span.start, span.end)));
    }
    if span.end > len {
        return Err(Error::InvalidStatement(format!(
                "{name} span [{}, {}) out of bounds for {len} tokens",
                span.start, span.end
            )));
    }
    Ok(())
}

impl RelationStatement {
    pub fn new(
        tokens: Vec<String>,
        head: Range<usize>,
        tail: Range<usize>,
        head_type: Option<String>,
        tail_type: Option<String>,
        label: Option<String>,
    ) -> Result<Self> {
        check_span("head", &head, tokens.len())?;
        check_span("tail", &tail, tokens.len())?;
        if head.start < tail.end && tail.start < head.end {
            return Err(Error::InvalidStatement(format!(
                    "head [{}, {}) overlaps tail [{}, {})",
                    head.start, head.end, tail.start, tail.end
                )));
        }
        if head_type.is_some() != tail_type.is_some() {
            return Err(Error::InvalidStatement("head_type and tail_type must both be present or both absent".into()));
        }
        Ok(Self {
            tokens,
            head,
            tail,
            head_type,
            tail_type,
            label,
        })
    }

    /// Convenience constructor from a whitespace-separated sentence.
    pub fn from_text(
        text: &str,
        head: Range<usize>,
        tail: Range<usize>,
        label: Option<&str>,
    ) -> Result<Self> {
        Self::new(
            text.split_whitespace().map(str::to_owned).collect(),
            head,
            tail,
            None,
            None,
            label.map(str::to_owned),
        )
    }

    pub fn with_types(mut self, head_type: &str, tail_type: &str) -> Self {
        self.head_type = Some(head_type.to_owned());
        self.tail_type = Some(tail_type.to_owned());
        self
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn head(&self) -> Range<usize> {
        self.head.clone()
    }

    pub fn tail(&self) -> Range<usize> {
        self.tail.clone()
    }

    pub fn head_tokens(&self) -> &[String] {
        &self.tokens[self.head.clone()]
    }

    pub fn tail_tokens(&self) -> &[String] {
        &self.tokens[self.tail.clone()]
    }

    pub fn head_type(&self) -> Option<&str> {
        self.head_type.as_deref()
    }

    pub fn tail_type(&self) -> Option<&str> {
        self.tail_type.as_deref()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn is_typed(&self) -> bool {
        self.head_type.is_some()
    }

    /// Same entities, types and label over a new token sequence.
    pub fn with_tokens(&self, tokens: Vec<String>, head: Range<usize>, tail: Range<usize>) -> Result<Self> {
        Self::new(
            tokens,
            head,
            tail,
            self.head_type.clone(),
            self.tail_type.clone(),
            self.label.clone(),
        )
    }

    pub fn without_label(&self) -> Self {
        Self {
            label: None,
            ..self.clone()
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Relation names with the no-relation class pinned at index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocab {
    relations: Vec<String>,
}

impl LabelVocab {
    /// `na` first, then `relations` in the given order. Duplicates are rejected.
    pub fn new(na: &str, relations: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let mut names = vec![na.to_owned()];
        for r in relations {
            let r = r.into();
            if r == na {
                continue;
            }
            if names.contains(&r) {
                return Err(Error::Config(format!("duplicate relation '{r}'")));
            }
            names.push(r);
        }
        Ok(Self { relations: names })
    }

    /// NA first, then every other observed label in sorted order.
    pub fn from_statements(na: &str, data: &[RelationStatement]) -> Self {
        let rest: BTreeSet<&str> = data
            .iter()
            .filter_map(|s| s.label())
            .filter(|&l| l != na)
            .collect();
        Self::new(na, rest).expect("sorted set has no duplicates")
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn na(&self) -> &str {
        &self.relations[0]
    }

    pub fn names(&self) -> &[String] {
        &self.relations
    }

    pub fn name(&self, index: usize) -> &str {
        &self.relations[index]
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.relations
            .iter()
            .position(|r| r == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_owned()))
    }

    /// Gold class index of a labelled statement.
    pub fn label_of(&self, stmt: &RelationStatement) -> Result<usize> {
        self.index(stmt.label().ok_or(Error::MissingLabel)?)
    }
}

/// Probability vector over the label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution<F> {
    probs: Vec<F>,
}

impl<F: Scalar> LabelDistribution<F> {
    pub fn new(probs: Vec<F>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("empty label distribution".into()));
        }
        if probs.iter().any(|&p| !(p >= F::zero()) || !p.is_finite()) {
            return Err(Error::Shape("label distribution has a negative or non-finite entry".into()));
        }
        let sum: F = probs.iter().copied().sum();
        if (sum - F::one()).abs().as_f64() > Self::tolerance(probs.len()) {
            return Err(Error::Shape(format!("label distribution sums to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Sum-to-one tolerance: 1e-6, widened to a few ulps per entry for f32.
    pub fn tolerance(len: usize) -> f64 {
        (4.0 * F::epsilon().as_f64() * len as f64).max(1e-6)
    }

    pub(crate) fn new_unchecked(probs: Vec<F>) -> Self {
        Self { probs }
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut probs = vec![F::zero(); len];
        probs[index] = F::one();
        Self { probs }
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            probs: vec![F::one() / F::of(len as f64); len],
        }
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// First index of the largest entry.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> F {
        self.probs[self.argmax()]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> F {
        self.probs
            .iter()
            .filter(|&&p| p > F::zero())
            .map(|&p| -p * p.ln())
            .sum()
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.probs.clone()).is_ok()
    }
}
