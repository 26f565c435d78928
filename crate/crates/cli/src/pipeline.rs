//! Data preparation and training shared by the commands and the experiments.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use remix_re::augment::{
    augment_corpus, read_table, AugmentSummary, CacheEntry, Pivot, TargetVocab, ToyPivot, TranslationModel,
};
use remix_re::corpus::{
    format_input, load_jsonl, stratified_split, LabelVocab, RelationStatement, SplitManifest, NA,
};
use remix_re::encoder::{EncoderConfig, RelationModel, TokenVocab};
use remix_re::trainer::{encode_labelled, encode_statement, fit, EpochMetrics, FitOutcome, LabelledExample, UnlabelledPool};
use remix_re::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PivotKind, PivotSpec};
use crate::error::{CliError, CliResult};

/// Index of the no-relation class in every label vocabulary built here.
pub const NA_INDEX: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<RelationStatement>,
    pub dev: Vec<RelationStatement>,
}

fn load_data(path: &Path, what: &'static str) -> CliResult<Vec<RelationStatement>> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            what,
            path: path.to_path_buf(),
            command: "synth",
        });
    }
    Ok(load_jsonl(path)?)
}

pub fn load_corpus(cfg: &ExperimentConfig) -> CliResult<Corpus> {
    Ok(Corpus {
        train: load_data(&cfg.train_path(), "training data")?,
        dev: load_data(&cfg.dev_path(), "dev data")?,
    })
}

pub fn make_split(cfg: &ExperimentConfig, train: &[RelationStatement]) -> CliResult<SplitManifest> {
    let spec = cfg.split.spec()?;
    let split = stratified_split(train, &spec)?;
    Ok(SplitManifest {
        spec,
        total: train.len(),
        split,
    })
}

/// A pivot whose target vocabulary holds only the end-of-sequence token.
struct NullModel(TargetVocab);

impl TranslationModel for NullModel {
    fn vocab(&self) -> &TargetVocab {
        &self.0
    }

    fn log_probs(&self, _: &[String], _: &[usize]) -> Vec<f64> {
        vec![0.0]
    }
}

fn table(path: &Option<std::path::PathBuf>) -> CliResult<BTreeMap<String, Vec<String>>> {
    match path {
        Some(p) if !p.exists() => Err(CliError::MissingArtifact {
            what: "pivot table",
            path: p.clone(),
            command: "synth",
        }),
        Some(p) => Ok(read_table(p)?),
        None => Ok(BTreeMap::new()),
    }
}

fn build_pivot(name: &str, spec: &PivotSpec, words: &[String]) -> CliResult<Pivot> {
    Ok(match spec.kind {
        PivotKind::Identity => ToyPivot::identity(words),
        PivotKind::Shuffle => ToyPivot::clause_shuffle(words, spec.seed),
        PivotKind::Cipher => ToyPivot::cipher(
            name,
            words,
            &table(&spec.substitution)?,
            &table(&spec.synonyms)?,
            spec.noise,
            spec.seed,
        )?,
        PivotKind::Null => {
            let model = Arc::new(NullModel(TargetVocab::new(Vec::<String>::new())));
            Pivot {
                name: name.to_string(),
                forward: model.clone(),
                backward: model,
            }
        }
    })
}

/// Pivots in name order, over the token set of `data`.
pub fn build_pivots(cfg: &ExperimentConfig, data: &[RelationStatement]) -> CliResult<Vec<Pivot>> {
    let mut words: Vec<String> = data.iter().flat_map(|s| s.tokens().iter().cloned()).collect();
    words.sort();
    words.dedup();
    cfg.augment
        .pivots
        .iter()
        .map(|(name, spec)| build_pivot(name, spec, &words))
        .collect()
}

/// Augments the unlabelled part of the split; entry `i` belongs to the
/// `i`-th unlabelled statement.
pub fn augment_unlabelled(
    cfg: &ExperimentConfig,
    train: &[RelationStatement],
    manifest: &SplitManifest,
) -> CliResult<(Vec<CacheEntry>, AugmentSummary)> {
    let pivots = build_pivots(cfg, train)?;
    let unlabelled: Vec<RelationStatement> =
        manifest.split.unlabelled.iter().map(|&i| train[i].without_label()).collect();
    let (out, summary) = augment_corpus(&unlabelled, &pivots, &cfg.augment.decoder(), cfg.augment.seed);
    let entries = out
        .into_iter()
        .enumerate()
        .map(|(index, a)| CacheEntry {
            index,
            augmentations: a.statements,
        })
        .collect();
    Ok((entries, summary))
}

/// Encoded training material.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub labelled: Vec<LabelledExample>,
    pub pool: UnlabelledPool,
    pub dev: Vec<LabelledExample>,
    pub tokens: TokenVocab,
    pub labels: LabelVocab,
    pub encoder: EncoderConfig,
}

/// Whether the configured run consumes augmentations.
pub fn needs_augmentations(cfg: &ExperimentConfig) -> bool {
    cfg.train.k > 0 && cfg.train.gamma_m > 0.0
}

/// Encodes the split. The token and label vocabularies come from the whole
/// training pool so that runs differing only in how much of it they use
/// start from the same initialisation.
pub fn prepare(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    manifest: &SplitManifest,
    cache: Option<&[CacheEntry]>,
) -> CliResult<Prepared> {
    if manifest.total != corpus.train.len() {
        return Err(CliError::Config(format!(
            "split manifest covers {} statements but the training data has {}",
            manifest.total,
            corpus.train.len()
        )));
    }
    let scheme = cfg.scheme();
    let formatted = corpus
        .train
        .iter()
        .map(|s| format_input(s, scheme))
        .collect::<Result<Vec<_>, _>>()?;
    let tokens = TokenVocab::build(&formatted)?;
    let labels = LabelVocab::from_statements(NA, &corpus.train);

    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus.train[i].clone()).collect::<Vec<_>>();
    let labelled = encode_labelled(&pick(&manifest.split.labelled), scheme, &tokens, &labels)?;
    let dev = encode_labelled(&corpus.dev, scheme, &tokens, &labels)?;

    let unlabelled = pick(&manifest.split.unlabelled);
    let originals = unlabelled
        .iter()
        .map(|s| encode_statement(s, scheme, &tokens))
        .collect::<Result<Vec<_>, _>>()?;
    let k = cfg.train.k;
    let augmentations = if needs_augmentations(cfg) && !unlabelled.is_empty() {
        let cache = cache.ok_or(CliError::MissingArtifact {
            what: "augmentation cache",
            path: cfg.cache_path(),
            command: "augment",
        })?;
        let by_index: BTreeMap<usize, &CacheEntry> = cache.iter().map(|e| (e.index, e)).collect();
        (0..unlabelled.len())
            .map(|i| {
                let entry = by_index.get(&i).filter(|e| e.augmentations.len() >= k).ok_or_else(|| {
                    CliError::Config(format!(
                        "augmentation cache lacks {k} augmentations for unlabelled statement {i}; rerun `remix augment`"
                    ))
                })?;
                entry.augmentations[..k]
                    .iter()
                    .map(|s| Ok(encode_statement(s, scheme, &tokens)?))
                    .collect::<CliResult<Vec<_>>>()
            })
            .collect::<CliResult<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let pool = UnlabelledPool::new(originals, augmentations)?;

    let mut encoder = cfg.encoder.clone();
    encoder.vocab_size = tokens.len();
    encoder.num_classes = labels.len();
    Ok(Prepared {
        labelled,
        pool,
        dev,
        tokens,
        labels,
        encoder,
    })
}

/// Summary of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_dev_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds: f64,
    pub history: Vec<EpochMetrics>,
}

pub fn train<F: Scalar>(cfg: &ExperimentConfig, data: &Prepared) -> CliResult<(FitOutcome<F>, TrainReport)> {
    let start = Instant::now();
    let model = RelationModel::<F>::new(data.encoder.clone())?;
    let pool = if cfg.train.gamma_m > 0.0 {
        data.pool.clone()
    } else {
        UnlabelledPool::empty()
    };
    let out = fit(model, &data.labelled, &pool, &data.dev, NA_INDEX, &cfg.train)?;
    let report = TrainReport {
        best_dev_f1: out.best_dev_f1,
        best_epoch: out.best_epoch,
        epochs_run: out.history.len(),
        seconds: start.elapsed().as_secs_f64(),
        history: out.history.clone(),
    };
    Ok((out, report))
}
