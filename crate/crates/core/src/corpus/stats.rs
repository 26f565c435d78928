use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{LabelVocab, RelationStatement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Distinct labels observed, the no-relation class included.
    pub relations: usize,
    pub examples: usize,
    pub na_examples: usize,
    pub na_fraction: f64,
}

pub fn dataset_stats(data: &[RelationStatement], vocab: &LabelVocab) -> DatasetStats {
    let labels: Vec<&str> = data.iter().filter_map(|s| s.label()).collect();
    let relations = labels.iter().collect::<BTreeSet<_>>().len();
    let na_examples = labels.iter().filter(|&&l| l == vocab.na()).count();
    let examples = data.len();
    DatasetStats {
        relations,
        examples,
        na_examples,
        na_fraction: if examples == 0 {
            0.0
        } else {
            na_examples as f64 / examples as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_na_example() {
        let data = vec![RelationStatement::from_text("a b", 0..1, 1..2, Some("no_relation")).unwrap()];
        let vocab = LabelVocab::from_statements("no_relation", &data);
        let stats = dataset_stats(&data, &vocab);
        assert_eq!(stats.relations, 1);
        assert_eq!(stats.examples, 1);
        assert_eq!(stats.na_fraction, 1.0);
    }

    #[test]
    fn counts_are_exact() {
        let mut data = Vec::new();
        for (label, n) in [("no_relation", 3), ("a", 4), ("b", 5)] {
            for _ in 0..n {
                data.push(RelationStatement::from_text("x y", 0..1, 1..2, Some(label)).unwrap());
            }
        }
        let vocab = LabelVocab::from_statements("no_relation", &data);
        let stats = dataset_stats(&data, &vocab);
        assert_eq!((stats.relations, stats.examples, stats.na_examples), (3, 12, 3));
        assert!((stats.na_fraction - 0.25).abs() < 1e-15);
    }
}
