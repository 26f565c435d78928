//! Template-generated relation corpora with typed entities.
//!
//! A sentence is `[filler] HEAD [filler] CONNECTIVE [filler] TAIL [filler] .`
//! The relation is a deterministic function of the connective and the
//! (head type, tail type) signature. Every connective word is one of several
//! interchangeable variants of a concept; the variants are exported as a
//! synonym table so a paraphrasing pivot can swap them without changing the
//! label. Some connectives are shared by two relations with different type
//! signatures, and some no-relation statements reuse a relational connective
//! under a signature no relation has, so entity types carry information that
//! the connective alone does not.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remix_re::corpus::{RelationStatement, NA};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    /// Number of classes, the no-relation class included.
    pub num_relations: usize,
    pub templates_per_relation: usize,
    /// Interchangeable variants per connective concept.
    pub variants: usize,
    /// Size of the filler vocabulary.
    pub vocab_size: usize,
    /// Distinct names per entity type.
    pub names_per_type: usize,
    pub num_examples: usize,
    /// Size of the separately generated dev set.
    pub dev_examples: usize,
    pub na_fraction: f64,
    /// Share of no-relation statements that reuse a relational connective
    /// under a type signature that never carries it.
    pub decoy_fraction: f64,
    pub entity_types: Vec<String>,
    /// Upper bound on filler tokens in each of the four filler slots.
    pub max_filler: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            num_relations: 8,
            templates_per_relation: 3,
            variants: 3,
            vocab_size: 200,
            names_per_type: 400,
            num_examples: 2000,
            dev_examples: 500,
            na_fraction: 0.25,
            decoy_fraction: 1.0 / 3.0,
            entity_types: ["person", "organization", "location", "date"].map(String::from).to_vec(),
            max_filler: 2,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(format!("synthetic: {m}")));
        if self.num_relations < 2 {
            return bad("num_relations must be at least 2 (the no-relation class counts)");
        }
        if !(0.0..1.0).contains(&self.na_fraction) {
            return bad("na_fraction must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.decoy_fraction) {
            return bad("decoy_fraction must lie in [0, 1]");
        }
        if self.templates_per_relation == 0 || self.variants == 0 {
            return bad("templates_per_relation and variants must be at least 1");
        }
        if self.entity_types.len() < 2 {
            return bad("need at least two entity types");
        }
        if self.names_per_type == 0 || self.vocab_size == 0 {
            return bad("names_per_type and vocab_size must be positive");
        }
        Ok(())
    }
}

/// A generated corpus plus the synonym table linking connective variants.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<RelationStatement>,
    pub dev: Vec<RelationStatement>,
    pub synonyms: BTreeMap<String, Vec<String>>,
}

impl SyntheticCorpus {
    /// The synonym table in the `key value...` text format.
    pub fn synonym_table(&self) -> String {
        let mut out = String::from("# connective variants\n");
        for (k, v) in &self.synonyms {
            let _ = writeln!(out, "{k} {}", v.join(" "));
        }
        out
    }
}

struct Grammar {
    /// Per relation: type signature and templates (each a list of concepts).
    relations: Vec<(String, (usize, usize), Vec<Vec<usize>>)>,
    /// Concepts used by no-relation statements.
    na_templates: Vec<Vec<usize>>,
    /// Variants of each concept.
    concepts: Vec<Vec<String>>,
    names: Vec<Vec<Vec<String>>>,
    filler: Vec<String>,
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap()))
        .collect()
}

/// Draws `n` distinct words not in `taken`.
fn fresh_words(rng: &mut ChaCha8Rng, n: usize, syllables: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn signatures(types: usize) -> Vec<(usize, usize)> {
    let mut sigs = Vec::new();
    for h in 0..types {
        for t in 0..types {
            if h != t {
                sigs.push((h, t));
            }
        }
    }
    sigs
}

impl Grammar {
    fn new(spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut taken = BTreeSet::new();
        let filler = fresh_words(rng, spec.vocab_size, 2, &mut taken);
        let positives = spec.num_relations - 1;
        let sigs = signatures(spec.entity_types.len());
        // Two relations per signature where possible.
        let n_sigs = positives.div_ceil(2).min(sigs.len()).max(1);
        let mut concepts: Vec<Vec<String>> = Vec::new();
        let mut new_concept = |rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>| {
            concepts.push(fresh_words(rng, spec.variants, 3, taken));
            concepts.len() - 1
        };

        let mut relations = Vec::with_capacity(positives);
        for r in 0..positives {
            let sig = sigs[r % n_sigs];
            let templates: Vec<Vec<usize>> = (0..spec.templates_per_relation)
                .map(|j| {
                    let len = 1 + usize::from(j % 2 == 1);
                    (0..len).map(|_| new_concept(rng, &mut taken)).collect()
                })
                .collect();
            relations.push((format!("rel_{r}"), sig, templates));
        }
        // Relations 2i and 2i+1 have different signatures; let them share
        // their first template so only the types tell them apart.
        for r in (1..positives).step_by(2) {
            if relations[r].1 != relations[r - 1].1 {
                relations[r].2[0] = relations[r - 1].2[0].clone();
            }
        }
        let na_templates = (0..spec.templates_per_relation.max(2))
            .map(|_| vec![new_concept(rng, &mut taken)])
            .collect();

        let names = (0..spec.entity_types.len())
            .map(|_| {
                (0..spec.names_per_type)
                    .map(|i| {
                        let n = 1 + usize::from(i % 3 == 0);
                        fresh_words(rng, n, 2, &mut taken)
                    })
                    .collect()
            })
            .collect();
        Self {
            relations,
            na_templates,
            concepts,
            names,
            filler,
        }
    }

    fn synonyms(&self) -> BTreeMap<String, Vec<String>> {
        let mut out = BTreeMap::new();
        for variants in &self.concepts {
            for v in variants {
                let others: Vec<String> = variants.iter().filter(|w| *w != v).cloned().collect();
                if !others.is_empty() {
                    out.insert(v.clone(), others);
                }
            }
        }
        out
    }

    /// Signatures under which a template carries a relation.
    fn signatures_of(&self, template: &[usize]) -> BTreeSet<(usize, usize)> {
        self.relations
            .iter()
            .filter(|(_, _, ts)| ts.iter().any(|t| t == template))
            .map(|(_, sig, _)| *sig)
            .collect()
    }

    fn sentence(
        &self,
        spec: &SyntheticCorpusSpec,
        rng: &mut ChaCha8Rng,
        template: &[usize],
        sig: (usize, usize),
        label: &str,
    ) -> RelationStatement {
        let mut tokens = Vec::new();
        let filler = |tokens: &mut Vec<String>, rng: &mut ChaCha8Rng| {
            let n = rng.random_range(0..=spec.max_filler);
            tokens.extend((0..n).map(|_| self.filler.choose(rng).unwrap().clone()));
        };
        filler(&mut tokens, rng);
        let head_name = self.names[sig.0].choose(rng).unwrap();
        let head = tokens.len()..tokens.len() + head_name.len();
        tokens.extend(head_name.iter().cloned());
        filler(&mut tokens, rng);
        for &c in template {
            tokens.push(self.concepts[c].choose(rng).unwrap().clone());
        }
        filler(&mut tokens, rng);
        let tail_name = self.names[sig.1].choose(rng).unwrap();
        let tail = tokens.len()..tokens.len() + tail_name.len();
        tokens.extend(tail_name.iter().cloned());
        filler(&mut tokens, rng);
        tokens.push(".".into());
        RelationStatement::new(
            tokens,
            head,
            tail,
            Some(spec.entity_types[sig.0].clone()),
            Some(spec.entity_types[sig.1].clone()),
            Some(label.to_string()),
        )
        .expect("generated spans are valid")
    }

    fn positive(&self, spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng, r: usize) -> RelationStatement {
        let (name, sig, templates) = &self.relations[r];
        let template = templates.choose(rng).unwrap();
        self.sentence(spec, rng, template, *sig, name)
    }

    fn negative(&self, spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng) -> RelationStatement {
        let sigs = signatures(spec.entity_types.len());
        if rng.random_bool(spec.decoy_fraction) {
            let (_, _, templates) = self.relations.choose(rng).unwrap();
            let template = templates.choose(rng).unwrap();
            let used = self.signatures_of(template);
            let free: Vec<_> = sigs.iter().filter(|s| !used.contains(s)).collect();
            if let Some(&&sig) = free.choose(rng) {
                return self.sentence(spec, rng, template, sig, NA);
            }
        }
        let template = self.na_templates.choose(rng).unwrap();
        let sig = *sigs.choose(rng).unwrap();
        self.sentence(spec, rng, template, sig, NA)
    }

    /// Exactly `round(n * na_fraction)` no-relation statements; the rest are
    /// spread evenly over the relations (earlier relations take the
    /// remainder), then shuffled.
    fn sample(&self, spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng, n: usize) -> Vec<RelationStatement> {
        let n_na = (n as f64 * spec.na_fraction).round() as usize;
        let positives = self.relations.len();
        let n_pos = n - n_na;
        let mut out = Vec::with_capacity(n);
        for r in 0..positives {
            let count = n_pos / positives + usize::from(r < n_pos % positives);
            out.extend((0..count).map(|_| self.positive(spec, rng, r)));
        }
        out.extend((0..n_na).map(|_| self.negative(spec, rng)));
        use rand::seq::SliceRandom;
        out.shuffle(rng);
        out
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> CliResult<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grammar = Grammar::new(spec, &mut rng);
    let train = grammar.sample(spec, &mut rng, spec.num_examples);
    let dev = grammar.sample(spec, &mut rng, spec.dev_examples);
    Ok(SyntheticCorpus {
        train,
        dev,
        synonyms: grammar.synonyms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use remix_re::corpus::{dataset_stats, LabelVocab};

    #[test]
    fn stats_match_the_spec() {
        let spec = SyntheticCorpusSpec::default();
        let c = generate_synthetic_corpus(&spec).unwrap();
        let vocab = LabelVocab::from_statements(NA, &c.train);
        let s = dataset_stats(&c.train, &vocab);
        assert_eq!((s.relations, s.examples, s.na_examples), (8, 2000, 500));
        assert_eq!(s.na_fraction, 0.25);
        assert_eq!(c.dev.len(), 500);
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SyntheticCorpusSpec { num_examples: 100, dev_examples: 10, ..Default::default() };
        assert_eq!(generate_synthetic_corpus(&spec).unwrap(), generate_synthetic_corpus(&spec).unwrap());
        let other = SyntheticCorpusSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate_synthetic_corpus(&spec).unwrap().train, generate_synthetic_corpus(&other).unwrap().train);
    }

    #[test]
    fn shared_connectives_are_disambiguated_by_types() {
        let spec = SyntheticCorpusSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Grammar::new(&spec, &mut rng);
        assert_eq!(g.relations[0].2[0], g.relations[1].2[0]);
        assert_ne!(g.relations[0].1, g.relations[1].1);
        // (template, signature) determines the label.
        let mut seen: BTreeMap<(Vec<usize>, (usize, usize)), &str> = BTreeMap::new();
        for (name, sig, templates) in &g.relations {
            for t in templates {
                if let Some(prev) = seen.insert((t.clone(), *sig), name) {
                    assert_eq!(prev, name);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for bad in [
            SyntheticCorpusSpec { num_relations: 1, ..Default::default() },
            SyntheticCorpusSpec { na_fraction: 1.0, ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic_corpus(&bad), Err(CliError::Config(_))));
        }
    }
}
