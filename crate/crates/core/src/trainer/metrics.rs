//! Micro-averaged F1 over the positive relations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LabelledExample;
use crate::encoder::RelationModel;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    /// Gold examples of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub micro_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Every class except `na`.
    pub per_class: Vec<ClassScore>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Pools counts over every class except `na`: a prediction is a true
/// positive when it matches a non-NA gold label, a false positive when it
/// names a relation the gold label does not, and a non-NA gold label the
/// prediction misses is a false negative.
pub fn score_predictions(gold: &[usize], pred: &[usize], num_classes: usize, na: usize) -> Evaluation {
    assert_eq!(gold.len(), pred.len(), "one prediction per gold label");
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fnn = vec![0usize; num_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        if g == p {
            if g != na {
                tp[g] += 1;
            }
            continue;
        }
        if p != na {
            fp[p] += 1;
        }
        if g != na {
            fnn[g] += 1;
        }
    }
    let (t, f, n): (usize, usize, usize) = (tp.iter().sum(), fp.iter().sum(), fnn.iter().sum());
    let (precision, recall) = (ratio(t, t + f), ratio(t, t + n));
    let per_class = (0..num_classes)
        .filter(|&c| c != na)
        .map(|c| ClassScore {
            label: c,
            precision: ratio(tp[c], tp[c] + fp[c]),
            recall: ratio(tp[c], tp[c] + fnn[c]),
            support: tp[c] + fnn[c],
        })
        .collect();
    Evaluation {
        micro_f1: f1(precision, recall),
        precision,
        recall,
        true_positives: t,
        false_positives: f,
        false_negatives: n,
        per_class,
    }
}

/// Scores argmax predictions on `data`; `na` is the class index excluded from
/// the positives.
pub fn evaluate<F: Scalar>(model: &RelationModel<F>, data: &[LabelledExample], na: usize) -> Result<Evaluation> {
    let pred = data
        .par_iter()
        .map(|ex| Ok(model.predict(&ex.input)?.argmax()))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<usize> = data.iter().map(|ex| ex.label).collect();
    Ok(score_predictions(&gold, &pred, model.num_classes(), na))
}
