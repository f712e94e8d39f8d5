use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use trail_cli::{cmd_ablate, cmd_bc, cmd_bias, cmd_eval, cmd_train, EvalArgs, RunArgs, TrainArgs};
use trail_core::runner::{mean_std, EvalMode};

#[derive(Parser)]
#[command(name = "trail", version, about = "Goal-conditioned training with trajectory sub-goals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing, files overwritten).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Online training; writes per-seed metrics and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Evaluation queries (`id,s..,g..` CSV) instead of the frozen set.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Greedy evaluation of saved checkpoints.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        /// gcsl or trail
        #[arg(long, default_value = "gcsl")]
        mode: String,
    },
    /// Behavioral cloning accuracy table.
    Bc {
        #[command(flatten)]
        common: Common,
    },
    /// Hindsight gap distribution, empirical against exact.
    Bias {
        #[command(flatten)]
        common: Common,
    },
    /// Encoder ablation against a frozen policy.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
    },
}

fn run_args(c: Common) -> RunArgs {
    RunArgs {
        config: c.config,
        out: c.out,
        seed: c.seed,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { common, queries } => {
            let summary = cmd_train(&TrainArgs {
                config: common.config,
                out: common.out.clone(),
                seed: common.seed,
                queries,
            })
            .context("train failed")?;
            let (g, _) = mean_std(&summary.gcsl);
            let (t, _) = mean_std(&summary.trail);
            println!("success_gcsl {g:.4}");
            println!("success_trail {t:.4}");
            println!("wrote {}", common.out.display());
        }
        Command::Eval {
            common,
            policy,
            encoder,
            queries,
            mode,
        } => {
            let mode: EvalMode = mode.parse()?;
            let rate = cmd_eval(&EvalArgs {
                config: common.config,
                policy,
                encoder,
                queries,
                mode,
                out: common.out,
                seed: common.seed,
            })
            .context("eval failed")?;
            println!("success_rate {rate:.4}");
        }
        Command::Bc { common } => {
            let path = cmd_bc(&run_args(common)).context("bc failed")?;
            println!("wrote {}", path.display());
        }
        Command::Bias { common } => {
            let path = cmd_bias(&run_args(common)).context("bias failed")?;
            println!("wrote {}", path.display());
        }
        Command::Ablate { common, policy } => {
            let path = cmd_ablate(&run_args(common), &policy).context("ablate failed")?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
