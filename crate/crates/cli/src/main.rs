use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use selectaugment_cli::checkpoint;
use selectaugment_cli::commands::{
    cmd_demo_shift, cmd_oracle_test, cmd_pretrain, cmd_sweep, cmd_train, parse_intervals,
};
use selectaugment_cli::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "selectaugment",
    version,
    about = "Learned sample selection for data augmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Selection strategy, e.g. `selectaugment`, `all`, `fixed(0.5)`.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Augmentation op: mixup, cutmix, cutout or randtransform.
    #[arg(long = "da-op", global = true)]
    da_op: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a target network with the configured selection strategy.
    Train {
        /// Continue from a run checkpoint; its embedded config is used and
        /// only `--out` may override it.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Pre-train the selection policies against a small proxy network.
    Pretrain,
    /// Compare ratio-pool interval counts.
    Sweep {
        /// Comma-separated interval counts; defaults to the config's list.
        #[arg(long)]
        intervals: Option<String>,
    },
    /// Feature-space distance of original, augmented and selected samples.
    DemoShift,
    /// Check the reward pipeline and the child policy against brute force.
    OracleTest,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        strategy: common.strategy.clone(),
        da_op: common.da_op.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { resume: Some(path) } => {
            let (mut cfg, state) = checkpoint::decode_run(&checkpoint::read(&path)?)?;
            if let Some(out) = cli.common.out {
                cfg.out = out;
            }
            let s = cmd_train(&cfg, Some(state))?;
            report_train(&s);
        }
        Command::Train { resume: None } => {
            let s = cmd_train(&load_config(&cli.common)?, None)?;
            report_train(&s);
        }
        Command::Pretrain => {
            let path = cmd_pretrain(&load_config(&cli.common)?)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep { intervals } => {
            let cfg = load_config(&cli.common)?;
            let intervals = match intervals {
                Some(s) => parse_intervals(&s)?,
                None => cfg.sweep_intervals.clone(),
            };
            for r in cmd_sweep(&cfg, &intervals)? {
                println!(
                    "intervals {:>3}  test accuracy {:.4}  mean ratio {:.3}",
                    r.intervals, r.final_test_accuracy, r.mean_ratio
                );
            }
        }
        Command::DemoShift => {
            let s = cmd_demo_shift(&load_config(&cli.common)?)?;
            println!(
                "mean centroid distance: original {:.4}  selected {:.4}  full {:.4}",
                s.mean_original, s.mean_selected, s.mean_full
            );
        }
        Command::OracleTest => {
            let s = cmd_oracle_test(&load_config(&cli.common)?)?;
            for c in &s.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} {} ({}; value {})", c.check, c.detail, c.value);
            }
            return Ok(s.passed());
        }
    }
    Ok(true)
}

fn report_train(s: &selectaugment_cli::commands::TrainSummary) {
    if let Some(e) = s.evals.last() {
        println!(
            "epoch {} test accuracy {:.4} after {} steps",
            e.epoch, e.accuracy, s.steps
        );
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
