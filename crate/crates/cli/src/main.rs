use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use remix_cli::commands;
use remix_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "remix", version, about = "Semi-supervised relation extraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write labelled/unlabelled/remainder manifests.
    Split,
    /// Back-translate the unlabelled split into the augmentation cache.
    Augment,
    /// Train and save the best checkpoint.
    Train,
    /// Score the checkpoint on the dev set.
    Eval,
    /// Incremental grid search over `[grid]`.
    Gridsearch,
    /// Generate a synthetic corpus.
    Synth,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match cli.command {
        Command::Synth => {
            let r = commands::cmd_synth(&cfg)?;
            println!("wrote {} training and {} dev statements to {}", r.train, r.dev, cfg.out.display());
        }
        Command::Split => {
            let m = commands::cmd_split(&cfg)?;
            println!(
                "labelled {}, unlabelled {}, remainder {} of {}",
                m.split.labelled.len(),
                m.split.unlabelled.len(),
                m.split.remainder.len(),
                m.total
            );
        }
        Command::Augment => {
            let s = commands::cmd_augment(&cfg)?;
            println!(
                "{} statements, {} decodes, {} satisfied, {} fallbacks",
                s.statements, s.decodes, s.satisfied, s.fallbacks
            );
        }
        Command::Train => {
            let r = commands::cmd_train(&cfg)?;
            for m in &r.history {
                println!(
                    "epoch {:>3}  sup {:.4}  unsup {:.4}  masked {:.3}  dev F1 {:.4}",
                    m.epoch, m.sup_loss, m.unsup_loss, m.masked_fraction, m.dev_f1
                );
            }
            println!("best dev F1 {:.4} at epoch {} ({:.1}s)", r.best_dev_f1, r.best_epoch, r.seconds);
        }
        Command::Eval => {
            let e = commands::cmd_eval(&cfg)?;
            println!("micro F1 {:.4}  P {:.4}  R {:.4}", e.micro_f1, e.precision, e.recall);
        }
        Command::Gridsearch => {
            let g = commands::cmd_gridsearch(&cfg)?;
            println!("{:>5} {:>8} {:>8} {:>6} {:>6} {:>8} {:>8}", "trial", "param", "T", "gamma", "beta", "gamma_m", "dev F1");
            for t in g.ranked() {
                println!(
                    "{:>5} {:>8} {:>8} {:>6} {:>6} {:>8} {:>8.4}",
                    t.trial,
                    t.param.name(),
                    t.temperature,
                    t.gamma,
                    t.beta,
                    t.gamma_m,
                    t.dev_f1
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
