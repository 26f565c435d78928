//! One function per subcommand. Each validates the whole config before it
//! writes anything.

use std::fs;
use std::io::Write;
use std::path::Path;

use remix_re::augment::{load_augmentation_cache, write_augmentation_cache, AugmentSummary};
use remix_re::corpus::{read_split_manifest, write_jsonl, write_split_manifest, LabelVocab, MarkerScheme, SplitManifest};
use remix_re::encoder::{checkpoint, TokenVocab};
use remix_re::trainer::{encode_labelled, evaluate, Evaluation};
use remix_re::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Precision};
use crate::error::{CliError, CliResult};
use crate::grid::{incremental_search, GridResult};
use crate::pipeline::{self, load_corpus, needs_augmentations, Prepared, TrainReport, NA_INDEX};
use crate::synth::generate_synthetic_corpus;

fn create_out(cfg: &ExperimentConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("serializable row");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&buf).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_text(path, &(text + "\n"))
}

fn load_manifest(cfg: &ExperimentConfig) -> CliResult<SplitManifest> {
    let path = cfg.split_path();
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            what: "split manifest",
            path,
            command: "split",
        });
    }
    Ok(read_split_manifest(&path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub train: usize,
    pub dev: usize,
}

/// Writes `corpus.jsonl`, `dev.jsonl` and `synonyms.txt` under `out`.
pub fn cmd_synth(cfg: &ExperimentConfig) -> CliResult<SynthReport> {
    cfg.validate()?;
    let corpus = generate_synthetic_corpus(&cfg.synthetic)?;
    create_out(cfg)?;
    write_jsonl(cfg.out.join("corpus.jsonl"), &corpus.train)?;
    write_jsonl(cfg.out.join("dev.jsonl"), &corpus.dev)?;
    write_text(&cfg.out.join("synonyms.txt"), &corpus.synonym_table())?;
    Ok(SynthReport {
        train: corpus.train.len(),
        dev: corpus.dev.len(),
    })
}

pub fn cmd_split(cfg: &ExperimentConfig) -> CliResult<SplitManifest> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let manifest = pipeline::make_split(cfg, &corpus.train)?;
    create_out(cfg)?;
    write_split_manifest(cfg.split_path(), &manifest)?;
    Ok(manifest)
}

/// Writes `augmentations.jsonl` and `augment_summary.json`.
pub fn cmd_augment(cfg: &ExperimentConfig) -> CliResult<AugmentSummary> {
    cfg.validate()?;
    if cfg.augment.pivots.len() < cfg.train.k.max(1) {
        return Err(CliError::Config(format!(
            "train.k = {} but {} augment pivots are configured",
            cfg.train.k,
            cfg.augment.pivots.len()
        )));
    }
    let corpus = load_corpus(cfg)?;
    let manifest = load_manifest(cfg)?;
    if manifest.total != corpus.train.len() {
        return Err(CliError::Config(format!(
            "split manifest covers {} statements but the training data has {}; rerun `remix split`",
            manifest.total,
            corpus.train.len()
        )));
    }
    let (entries, summary) = pipeline::augment_unlabelled(cfg, &corpus.train, &manifest)?;
    write_augmentation_cache(cfg.cache_path(), &entries)?;
    write_json(&cfg.out.join("augment_summary.json"), &summary)?;
    Ok(summary)
}

/// Loads data, manifest and (when the run needs it) the augmentation cache.
pub fn prepare_run(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let corpus = load_corpus(cfg)?;
    let manifest = load_manifest(cfg)?;
    let cache = if needs_augmentations(cfg) {
        let path = cfg.cache_path();
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                what: "augmentation cache",
                path,
                command: "augment",
            });
        }
        Some(load_augmentation_cache(&path)?)
    } else {
        None
    };
    pipeline::prepare(cfg, &corpus, &manifest, cache.as_deref())
}

#[derive(Serialize, Deserialize)]
struct CheckpointExtra {
    tokens: TokenVocab,
    labels: LabelVocab,
    scheme: MarkerScheme,
    best_epoch: usize,
    best_dev_f1: f64,
}

fn train_as<F: Scalar>(cfg: &ExperimentConfig, data: &Prepared) -> CliResult<TrainReport> {
    let (out, report) = pipeline::train::<F>(cfg, data)?;
    let extra = CheckpointExtra {
        tokens: data.tokens.clone(),
        labels: data.labels.clone(),
        scheme: cfg.scheme(),
        best_epoch: out.best_epoch,
        best_dev_f1: out.best_dev_f1,
    };
    let extra = serde_json::to_value(&extra).expect("serializable extra");
    checkpoint::save(cfg.checkpoint_path(), &out.model, &extra)?;
    write_json_lines(&cfg.metrics_path(), &out.history)?;
    if cfg.train.record_mix {
        write_json_lines(&cfg.out.join("mix.jsonl"), &out.mixed)?;
    }
    Ok(report)
}

/// Writes `model.ckpt`, `metrics.jsonl` and `config.resolved.toml`.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<TrainReport> {
    cfg.validate()?;
    let data = prepare_run(cfg)?;
    create_out(cfg)?;
    write_text(&cfg.out.join("config.resolved.toml"), &cfg.to_toml())?;
    match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg, &data),
        Precision::F64 => train_as::<f64>(cfg, &data),
    }
}

fn eval_as<F: Scalar>(cfg: &ExperimentConfig) -> CliResult<Evaluation> {
    let path = cfg.checkpoint_path();
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            what: "checkpoint",
            path,
            command: "train",
        });
    }
    let (model, extra) = checkpoint::load::<F>(&path)?;
    let extra: CheckpointExtra = serde_json::from_value(extra)
        .map_err(|e| CliError::Config(format!("checkpoint {} lacks run metadata: {e}", path.display())))?;
    let corpus = load_corpus(cfg)?;
    let dev = encode_labelled(&corpus.dev, extra.scheme, &extra.tokens, &extra.labels)?;
    Ok(evaluate(&model, &dev, NA_INDEX)?)
}

/// Scores the saved checkpoint on the dev set; writes `eval.json`.
pub fn cmd_eval(cfg: &ExperimentConfig) -> CliResult<Evaluation> {
    cfg.validate()?;
    let ev = match cfg.precision {
        Precision::F32 => eval_as::<f32>(cfg)?,
        Precision::F64 => eval_as::<f64>(cfg)?,
    };
    write_json(&cfg.out.join("eval.json"), &ev)?;
    Ok(ev)
}

/// Runs the incremental search over `cfg.grid`; writes `gridsearch.jsonl`
/// (one line per trial, in run order) and `gridsearch_best.toml`.
pub fn cmd_gridsearch(cfg: &ExperimentConfig) -> CliResult<GridResult> {
    cfg.validate()?;
    if cfg.grid.is_empty() {
        return Err(CliError::Config("gridsearch needs a [grid] table".into()));
    }
    let mut probe = cfg.clone();
    for name in cfg.grid.keys() {
        // validated above; a gamma_m axis may switch augmentation on
        if crate::grid::GridParam::parse(name)? == crate::grid::GridParam::GammaM {
            probe.train.gamma_m = probe.train.gamma_m.max(1.0);
        }
    }
    let data = prepare_run(&probe)?;
    create_out(cfg)?;
    let result = incremental_search(&cfg.train, &cfg.grid, |train| {
        let mut trial = cfg.clone();
        trial.train = train.clone();
        let report = match cfg.precision {
            Precision::F32 => pipeline::train::<f32>(&trial, &data)?.1,
            Precision::F64 => pipeline::train::<f64>(&trial, &data)?.1,
        };
        Ok(report.best_dev_f1)
    })?;
    write_json_lines(&cfg.out.join("gridsearch.jsonl"), &result.trials)?;
    let mut best = cfg.clone();
    best.train = result.best.clone();
    best.grid.clear();
    write_text(&cfg.out.join("gridsearch_best.toml"), &best.to_toml())?;
    Ok(result)
}
