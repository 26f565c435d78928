//! Experiment configuration.
//!
//! Configs are TOML files; every key may be written either inside a
//! `[section]` or as a dotted key (`train.gamma_m = 0.1`). Unknown keys are
//! rejected. Paths are resolved relative to the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use remix_re::augment::BackTranslateConfig;
use remix_re::corpus::{MarkerScheme, SplitSpec};
use remix_re::encoder::EncoderConfig;
use remix_re::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::synth::SyntheticCorpusSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training pool; defaults to `<out>/corpus.jsonl` as written by `synth`.
    pub train: Option<PathBuf>,
    /// Dev set; defaults to `<out>/dev.jsonl`.
    pub dev: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PivotKind {
    Identity,
    Cipher,
    Shuffle,
    /// Produces no target vocabulary; every decode fails.
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PivotSpec {
    pub kind: PivotKind,
    #[serde(default)]
    pub substitution: Option<PathBuf>,
    /// Synonym table; for synthetic corpora, `<out>/synonyms.txt`.
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub beam: usize,
    /// Output may exceed the source length by this many tokens.
    pub extra_len: usize,
    /// Sampling temperature over forward finalists; 0 decodes greedily.
    pub temperature: f64,
    pub seed: u64,
    /// Pivots by name; augmentation `k` comes from the `k`-th name in order.
    pub pivots: BTreeMap<String, PivotSpec>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let d = BackTranslateConfig::default();
        Self {
            beam: d.beam,
            extra_len: d.extra_len,
            temperature: d.temperature,
            seed: 0,
            pivots: BTreeMap::new(),
        }
    }
}

impl AugmentConfig {
    pub fn decoder(&self) -> BackTranslateConfig {
        BackTranslateConfig {
            beam: self.beam,
            extra_len: self.extra_len,
            temperature: self.temperature,
        }
    }
}

/// Fractions of the training pool; validated into a `SplitSpec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub labelled_fraction: f64,
    pub unlabelled_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            labelled_fraction: 0.05,
            unlabelled_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self) -> CliResult<SplitSpec> {
        Ok(SplitSpec::new(self.labelled_fraction, self.unlabelled_fraction, self.seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub scheme: Option<MarkerScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub precision: Precision,
    /// When set, overrides every other seed.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub synthetic: SyntheticCorpusSpec,
    pub split: SplitConfig,
    pub input: InputConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    /// Grid-search values by parameter name (`T`, `gamma`, `beta`, `gamma_m`).
    pub grid: BTreeMap<String, Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs/default"),
            precision: Precision::F32,
            seed: None,
            data: DataConfig::default(),
            synthetic: SyntheticCorpusSpec::default(),
            split: SplitConfig::default(),
            input: InputConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            grid: BTreeMap::new(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg.with_seed_applied())
    }

    /// Reads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.out);
        for p in [&mut cfg.data.train, &mut cfg.data.dev].into_iter().flatten() {
            resolve(base, p);
        }
        for pivot in cfg.augment.pivots.values_mut() {
            for p in [&mut pivot.substitution, &mut pivot.synonyms].into_iter().flatten() {
                resolve(base, p);
            }
        }
        Ok(cfg.with_seed_applied())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copies `seed` into the split, initialisation, training, augmentation
    /// and synthetic-corpus seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self.with_seed_applied()
    }

    fn with_seed_applied(mut self) -> Self {
        if let Some(s) = self.seed {
            self.split.seed = s;
            self.encoder.init_seed = s;
            self.train.seed = s;
            self.augment.seed = s;
            self.synthetic.seed = s;
        }
        self
    }

    pub fn scheme(&self) -> MarkerScheme {
        self.input.scheme.unwrap_or(MarkerScheme::TypeMarkers)
    }

    pub fn train_path(&self) -> PathBuf {
        self.data.train.clone().unwrap_or_else(|| self.out.join("corpus.jsonl"))
    }

    pub fn dev_path(&self) -> PathBuf {
        self.data.dev.clone().unwrap_or_else(|| self.out.join("dev.jsonl"))
    }

    pub fn split_path(&self) -> PathBuf {
        self.out.join("split.jsonl")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.out.join("augmentations.jsonl")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out.join("model.ckpt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.out.join("metrics.jsonl")
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> CliResult<()> {
        self.split.spec()?;
        self.train.validate()?;
        self.synthetic.validate()?;
        if self.augment.beam == 0 {
            return Err(CliError::Config("augment.beam must be at least 1".into()));
        }
        for (name, p) in &self.augment.pivots {
            if p.kind == PivotKind::Cipher && !(0.0..1.0).contains(&p.noise) {
                return Err(CliError::Config(format!("pivot {name}: noise must lie in [0, 1)")));
            }
        }
        for name in self.grid.keys() {
            crate::grid::GridParam::parse(name)?;
        }
        Ok(())
    }
}
