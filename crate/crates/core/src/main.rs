use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ex2l::experiment::{self, ExperimentConfig, Workers};

/// Explanation-regularized training experiments.
///
/// Every command reads an optional config file and then `--key=value`
/// overrides of any config key (for example `--algorithm ex2l
/// --seeds 42,8,777`). Files are written to `--out-dir`.
#[derive(Parser)]
#[command(name = "ex2l", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train once per seed; metrics.csv, summary.csv, checkpoints, manifest.
    Train(Args),
    /// Every similarity kind under both samplers; screen.csv.
    Screen(Args),
    /// Export heatmaps of a checkpoint (--checkpoint, --heatmaps N).
    Gradcam(Args),
    /// Latent MMD of checkpoints (--checkpoint a,b --partitions by-label,...).
    Mmd(Args),
    /// Seconds per epoch per algorithm and the ratio to ERM.
    Timeit(Args),
    /// Randomized hyperparameter search; trials.csv and best.cfg.
    Search(Args),
    #[command(name = "__worker", hide = true)]
    Worker {
        config: PathBuf,
        task: String,
        index: usize,
    },
}

#[derive(clap::Args)]
struct Args {
    /// Config file with `key = value` lines under [section] headers.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `--key=value` or `--key value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn workers(cfg: &ExperimentConfig) -> ex2l::Result<Workers> {
    Ok(if cfg.parallel_trials > 1 {
        Workers::Processes {
            exe: std::env::current_exe()?,
            n: cfg.parallel_trials,
        }
    } else {
        Workers::InProcess
    })
}

fn run(cmd: Cmd) -> ex2l::Result<()> {
    let load = |a: &Args| ExperimentConfig::load(a.config.as_deref(), &a.overrides);
    match cmd {
        Cmd::Train(a) => {
            let runs = experiment::train(&load(&a)?)?;
            for r in runs {
                println!(
                    "seed {}: epoch {} test AA {:.4} WGA {:.4}",
                    r.seed, r.best_epoch, r.test.aa, r.test.wga
                );
            }
        }
        Cmd::Screen(a) => {
            let cfg = load(&a)?;
            let rep = experiment::screen(&cfg, &workers(&cfg)?)?;
            let top: Vec<_> = rep.top3.iter().map(|k| k.name()).collect();
            println!("top kinds by validation WGA: {}", top.join(", "));
        }
        Cmd::Gradcam(a) => {
            let rows = experiment::gradcam(&load(&a)?)?;
            println!("exported heatmaps for {} samples", rows.len());
        }
        Cmd::Mmd(a) => {
            for r in experiment::mmd(&load(&a)?)? {
                println!(
                    "{} {} {}: {}",
                    r.checkpoint, r.algorithm, r.partition, r.mmd
                );
            }
        }
        Cmd::Timeit(a) => {
            for r in experiment::timeit(&load(&a)?)? {
                let ratio = r
                    .ratio_vs_erm
                    .map(|x| format!(" ({x:.2}x ERM)"))
                    .unwrap_or_default();
                println!("{}: {:.3} s/epoch{ratio}", r.algorithm, r.seconds_per_epoch);
            }
        }
        Cmd::Search(a) => {
            let cfg = load(&a)?;
            let (results, best) = experiment::search(&cfg, &workers(&cfg)?)?;
            let b = &results[best];
            println!("best trial {} score {:.4}", b.trial.index, b.score());
        }
        Cmd::Worker {
            config,
            task,
            index,
        } => {
            let cfg = ExperimentConfig::load(Some(&config), &[])?;
            println!("{}", experiment::worker(&cfg, &task, index)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
