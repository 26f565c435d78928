//! Incremental (coordinate-wise) hyperparameter search.

use std::collections::BTreeMap;

use remix_re::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GridParam {
    #[serde(rename = "T")]
    Temperature,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "gamma_m")]
    GammaM,
}

impl GridParam {
    /// Search order.
    pub const ORDER: [GridParam; 4] = [Self::Temperature, Self::Gamma, Self::Beta, Self::GammaM];

    pub fn parse(name: &str) -> CliResult<Self> {
        Ok(match name {
            "T" | "temperature" => Self::Temperature,
            "gamma" => Self::Gamma,
            "beta" => Self::Beta,
            "gamma_m" => Self::GammaM,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown grid parameter `{name}` (expected T, gamma, beta or gamma_m)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Temperature => "T",
            Self::Gamma => "gamma",
            Self::Beta => "beta",
            Self::GammaM => "gamma_m",
        }
    }

    pub fn get(self, cfg: &TrainConfig) -> f64 {
        match self {
            Self::Temperature => cfg.temperature,
            Self::Gamma => cfg.gamma,
            Self::Beta => cfg.beta,
            Self::GammaM => cfg.gamma_m,
        }
    }

    pub fn set(self, cfg: &mut TrainConfig, v: f64) {
        match self {
            Self::Temperature => cfg.temperature = v,
            Self::Gamma => cfg.gamma = v,
            Self::Beta => cfg.beta = v,
            Self::GammaM => cfg.gamma_m = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial: usize,
    pub param: GridParam,
    pub value: f64,
    pub temperature: f64,
    pub gamma: f64,
    pub beta: f64,
    pub gamma_m: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub trials: Vec<Trial>,
    pub best: TrainConfig,
    pub best_dev_f1: f64,
}

impl GridResult {
    /// Trials by dev F1, best first; ties keep trial order.
    pub fn ranked(&self) -> Vec<&Trial> {
        let mut r: Vec<&Trial> = self.trials.iter().collect();
        r.sort_by(|a, b| b.dev_f1.total_cmp(&a.dev_f1));
        r
    }
}

/// Sweeps each listed parameter in [`GridParam::ORDER`] with the others held
/// at the best values found so far. `run` returns the dev F1 of a config.
/// A later value replaces the incumbent only on strict improvement.
pub fn incremental_search(
    base: &TrainConfig,
    grid: &BTreeMap<String, Vec<f64>>,
    mut run: impl FnMut(&TrainConfig) -> CliResult<f64>,
) -> CliResult<GridResult> {
    let mut axes: BTreeMap<GridParam, &[f64]> = BTreeMap::new();
    for (name, values) in grid {
        let p = GridParam::parse(name)?;
        if values.is_empty() {
            return Err(CliError::Config(format!("grid parameter `{name}` has no values")));
        }
        if axes.insert(p, values).is_some() {
            return Err(CliError::Config(format!("grid parameter `{}` listed twice", p.name())));
        }
    }
    if axes.is_empty() {
        return Err(CliError::Config("grid is empty".into()));
    }

    let mut best = base.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut trials = Vec::new();
    for p in GridParam::ORDER {
        let Some(values) = axes.get(&p) else { continue };
        let mut axis_best = (p.get(&best), f64::NEG_INFINITY);
        for &v in *values {
            let mut cfg = best.clone();
            p.set(&mut cfg, v);
            cfg.validate()?;
            let f1 = run(&cfg)?;
            trials.push(Trial {
                trial: trials.len(),
                param: p,
                value: v,
                temperature: cfg.temperature,
                gamma: cfg.gamma,
                beta: cfg.beta,
                gamma_m: cfg.gamma_m,
                dev_f1: f1,
            });
            if f1 > axis_best.1 {
                axis_best = (v, f1);
            }
        }
        p.set(&mut best, axis_best.0);
        best_f1 = axis_best.1;
    }
    Ok(GridResult {
        trials,
        best,
        best_dev_f1: best_f1,
    })
}

/// The hyperparameter grid used for the benchmark runs.
pub fn reference_grid() -> BTreeMap<String, Vec<f64>> {
    BTreeMap::from([
        ("T".to_string(), vec![0.4, 0.6, 0.8, 1.0]),
        ("gamma".to_string(), vec![0.0, 0.15, 0.3, 0.45]),
        ("beta".to_string(), vec![1.0, 10.0, 30.0, 60.0, 120.0, 190.0, 300.0, 600.0]),
        ("gamma_m".to_string(), vec![0.1, 1.0, 10.0]),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(cfg: &TrainConfig) -> f64 {
        // peaked at T = 0.8, gamma = 0.3, beta = 30, gamma_m = 1
        -(cfg.temperature - 0.8).abs() - (cfg.gamma - 0.3).abs() - (cfg.beta - 30.0).abs() / 100.0 - (cfg.gamma_m - 1.0).abs()
    }

    #[test]
    fn full_grid_runs_nineteen_trials_in_order() {
        let r = incremental_search(&TrainConfig::default(), &reference_grid(), |c| Ok(score(c))).unwrap();
        assert_eq!(r.trials.len(), 19);
        let order: Vec<GridParam> = r.trials.iter().map(|t| t.param).collect();
        assert!(order.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((r.best.temperature, r.best.gamma, r.best.beta, r.best.gamma_m), (0.8, 0.3, 30.0, 1.0));
        // later axes see the earlier winners
        assert!(r.trials[4..].iter().all(|t| t.temperature == 0.8));
        assert_eq!(r.ranked()[0].dev_f1, r.best_dev_f1);
    }

    #[test]
    fn ties_keep_the_first_value() {
        let grid = BTreeMap::from([("T".to_string(), vec![0.4, 0.6, 1.0])]);
        let r = incremental_search(&TrainConfig::default(), &grid, |_| Ok(0.5)).unwrap();
        assert_eq!(r.trials.len(), 3);
        assert_eq!(r.best.temperature, 0.4);
    }

    #[test]
    fn unknown_names_and_empty_axes_are_rejected() {
        let bad = BTreeMap::from([("lr".to_string(), vec![0.1])]);
        assert!(incremental_search(&TrainConfig::default(), &bad, |_| Ok(0.0)).is_err());
        let empty = BTreeMap::from([("gamma".to_string(), vec![])]);
        assert!(incremental_search(&TrainConfig::default(), &empty, |_| Ok(0.0)).is_err());
        let dup = BTreeMap::from([("T".to_string(), vec![0.4]), ("temperature".to_string(), vec![0.6])]);
        assert!(incremental_search(&TrainConfig::default(), &dup, |_| Ok(0.0)).is_err());
    }
}
