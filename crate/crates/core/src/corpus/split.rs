use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RelationStatement;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labelled_fraction: f64,
    pub unlabelled_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(labelled_fraction: f64, unlabelled_fraction: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            labelled_fraction,
            unlabelled_fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (l, u) = (self.labelled_fraction, self.unlabelled_fraction);
        if !(l > 0.0 && l <= 1.0) {
            return Err(Error::InvalidFraction(format!(
                "labelled fraction {l} outside (0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&u) {
            return Err(Error::InvalidFraction(format!(
                "unlabelled fraction {u} outside [0, 1)"
            )));
        }
        if l + u > 1.0 + 1e-12 {
            return Err(Error::InvalidFraction(format!(
                "labelled + unlabelled = {} exceeds 1",
                l + u
            )));
        }
        Ok(())
    }
}

/// Index partition of a dataset. Each list is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labelled: Vec<usize>,
    pub unlabelled: Vec<usize>,
    pub remainder: Vec<usize>,
}

impl Split {
    pub fn select<'a>(data: &'a [RelationStatement], indices: &[usize]) -> Vec<&'a RelationStatement> {
        indices.iter().map(|&i| &data[i]).collect()
    }

    pub fn labelled_of(&self, data: &[RelationStatement]) -> Vec<RelationStatement> {
        self.labelled.iter().map(|&i| data[i].clone()).collect()
    }

    pub fn unlabelled_of(&self, data: &[RelationStatement]) -> Vec<RelationStatement> {
        self.unlabelled.iter().map(|&i| data[i].clone()).collect()
    }
}

/// Per-class shares of `round(f * total)`: every class gets `floor(f * count)`
/// (at most its capacity) and the leftover goes one each to the classes with
/// the largest fractional parts, earlier classes first on ties.
fn allocate(counts: &[usize], caps: &[usize], f: f64) -> Vec<usize> {
    let total = (f * counts.iter().sum::<usize>() as f64).round() as usize;
    let exact: Vec<f64> = counts.iter().map(|&c| f * c as f64).collect();
    let mut take: Vec<usize> = exact.iter().zip(caps).map(|(e, &cap)| (e.floor() as usize).min(cap)).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = total.saturating_sub(take.iter().sum());
    for i in order {
        if left == 0 {
            break;
        }
        if take[i] < caps[i] {
            take[i] += 1;
            left -= 1;
        }
    }
    take
}

/// Per-class seeded sampling. Part sizes are `round(f * len)` overall and
/// within one of `f * count` in every relation; the rest is the remainder.
pub fn stratified_split(data: &[RelationStatement], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.iter().enumerate() {
        let label = s.label().ok_or(Error::InvalidRecord {
            record: i,
            message: "stratified split needs labelled statements".into(),
        })?;
        by_class.entry(label).or_default().push(i);
    }
    let counts: Vec<usize> = by_class.values().map(Vec::len).collect();
    let n_l = allocate(&counts, &counts, spec.labelled_fraction);
    let spare: Vec<usize> = counts.iter().zip(&n_l).map(|(c, l)| c - l).collect();
    let n_u = allocate(&counts, &spare, spec.unlabelled_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split {
        labelled: Vec::new(),
        unlabelled: Vec::new(),
        remainder: Vec::new(),
    };
    for (c, (_, mut members)) in by_class.into_iter().enumerate() {
        members.shuffle(&mut rng);
        let (l, u) = (n_l[c], n_u[c]);
        split.labelled.extend_from_slice(&members[..l]);
        split.unlabelled.extend_from_slice(&members[l..l + u]);
        split.remainder.extend_from_slice(&members[l + u..]);
    }
    split.labelled.sort_unstable();
    split.unlabelled.sort_unstable();
    split.remainder.sort_unstable();
    Ok(split)
}
