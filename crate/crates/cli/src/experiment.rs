//! Seeded comparisons between training variants on synthetic corpora.

use std::path::Path;

use remix_re::corpus::MarkerScheme;
use serde::{Deserialize, Serialize};

use crate::commands::{cmd_augment, cmd_split, cmd_synth, prepare_run};
use crate::config::{ExperimentConfig, Precision};
use crate::error::CliResult;
use crate::pipeline::{self, TrainReport};

/// A training variant, expressed as an edit of the base config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// `gamma_m = 0`: labelled data only.
    Supervised,
    /// Back-translation and interpolation, type markers.
    Full,
    /// Back-translation only: pairs `(s, s)` at `lambda = 1`.
    NoMix,
    /// Interpolation only: `k = 0`.
    NoBacktranslation,
    /// `Full` with plain entity markers.
    PlainMarkers,
}

impl Arm {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        match self {
            Arm::Supervised => cfg.train.gamma_m = 0.0,
            Arm::Full => {}
            Arm::NoMix => cfg.train.mix = false,
            Arm::NoBacktranslation => cfg.train.k = 0,
            Arm::PlainMarkers => cfg.input.scheme = Some(MarkerScheme::EntityMarkers),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub report: TrainReport,
}

/// Generates, splits and augments a corpus for `seed` under `root/seed-N`,
/// then trains every arm on it.
pub fn run_seed(base: &ExperimentConfig, root: &Path, seed: u64, arms: &[Arm]) -> CliResult<Vec<ArmRun>> {
    let mut cfg = base.clone().with_seed(seed);
    cfg.out = root.join(format!("seed-{seed}"));
    cfg.data = Default::default();
    let synonyms = cfg.out.join("synonyms.txt");
    for p in cfg.augment.pivots.values_mut() {
        p.synonyms = Some(synonyms.clone());
    }
    cmd_synth(&cfg)?;
    cmd_split(&cfg)?;
    cmd_augment(&cfg)?;
    arms.iter()
        .map(|&arm| {
            let mut c = cfg.clone();
            arm.apply(&mut c);
            let data = prepare_run(&c)?;
            let report = match c.precision {
                Precision::F32 => pipeline::train::<f32>(&c, &data)?.1,
                Precision::F64 => pipeline::train::<f64>(&c, &data)?.1,
            };
            Ok(ArmRun { arm, seed, report })
        })
        .collect()
}

/// Mean best dev F1 of `arm` over `runs`.
pub fn mean_f1(runs: &[ArmRun], arm: Arm) -> f64 {
    let f: Vec<f64> = runs.iter().filter(|r| r.arm == arm).map(|r| r.report.best_dev_f1).collect();
    f.iter().sum::<f64>() / f.len().max(1) as f64
}
