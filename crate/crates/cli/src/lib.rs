//! Library half of the `trail` binary: config parsing and one function per
//! subcommand. Every command overwrites its outputs, so reruns with the same
//! inputs leave identical files behind (the manifest timestamps aside).

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use trail_core::env::{fmt_f64, parse_queries_csv, write_queries_csv, GoalQuery};
use trail_core::gcsl::Policy;
use trail_core::nn::Checkpoint;
use trail_core::runner::{
    collect_corpus, evaluate, fixed_length_buffer, frozen_queries, histogram_rows, mean_std, run_ablation, run_bc,
    run_bias_analysis, stream_rng, train_with_queries, write_metrics_csv, AblationRow, BiasRow, EvalMode, HistogramRow,
};
use trail_core::trail::TrajectoryEncoder;
use trail_core::{Error, Result};

pub use config::{parse_config, BiasSource, RunConfig};

pub const BUILD_ID: &str = concat!("trail-cli ", env!("CARGO_PKG_VERSION"));

/// Reads and parses a config file; a missing path means all defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            parse_config(&text).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn apply_seed(cfg: &mut RunConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.train.seeds = vec![s];
    }
}

fn load_queries(path: &Path, state_dim: usize) -> Result<Vec<GoalQuery>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_queries_csv(&text, state_dim).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn manifest(cfg: &RunConfig, out: &Path, start: u64, end: Option<u64>) -> String {
    let v = json!({
        "build": BUILD_ID,
        "config": cfg.to_text(),
        "seeds": cfg.train.seeds,
        "out_dir": out.display().to_string(),
        "start_unix": start,
        "end_unix": end,
    });
    format!("{}\n", serde_json::to_string_pretty(&v).expect("manifest serializes"))
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub queries: Option<PathBuf>,
}

/// Per-seed success rates after training, one entry per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub seeds: Vec<u64>,
    pub gcsl: Vec<f64>,
    pub trail: Vec<f64>,
}

/// Writes `manifest.json` before anything else, then per seed
/// `seed_<s>/{metrics.csv, histogram.csv, policy.ckpt, encoder.ckpt}`, and
/// finally `queries.csv` and `summary.csv`.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_seed(&mut cfg, args.seed);
    cfg.train.validate()?;
    let start = unix_now();
    create_dir(&args.out)?;
    let manifest_path = args.out.join("manifest.json");
    write(&manifest_path, manifest(&cfg, &args.out, start, None))?;

    let state_dim = cfg.train.env.build(0)?.spec().state_dim;
    let queries = match &args.queries {
        Some(p) => load_queries(p, state_dim)?,
        None => frozen_queries(&cfg.train.env, cfg.train.n_eval_queries, cfg.train.query_seed)?,
    };
    write(&args.out.join("queries.csv"), write_queries_csv(&queries, state_dim))?;

    let mut summary = TrainSummary {
        seeds: cfg.train.seeds.clone(),
        gcsl: Vec::new(),
        trail: Vec::new(),
    };
    for &seed in &cfg.train.seeds {
        let outcome = train_with_queries(&cfg.train, seed, &queries)?;
        let dir = args.out.join(format!("seed_{seed}"));
        create_dir(&dir)?;
        write(&dir.join("metrics.csv"), write_metrics_csv(&outcome.metrics))?;
        outcome.policy.to_checkpoint().save(&dir.join("policy.ckpt"))?;
        outcome.encoder.to_checkpoint().save(&dir.join("encoder.ckpt"))?;
        let empty = Vec::new();
        let g = outcome.final_gcsl.as_ref();
        let t = outcome.final_trail.as_ref();
        let rows = histogram_rows(
            g.map_or(&empty, |r| &r.length_histogram),
            t.map_or(&empty, |r| &r.length_histogram),
        );
        write(&dir.join("histogram.csv"), HistogramRow::to_csv(&rows))?;
        summary.gcsl.push(g.map_or(f64::NAN, |r| r.success_rate));
        summary.trail.push(t.map_or(f64::NAN, |r| r.success_rate));
    }

    let mut csv = String::from("seed,success_gcsl,success_trail\n");
    for ((s, g), t) in summary.seeds.iter().zip(&summary.gcsl).zip(&summary.trail) {
        csv.push_str(&format!("{s},{},{}\n", fmt_f64(*g), fmt_f64(*t)));
    }
    let (gm, gs) = mean_std(&summary.gcsl);
    let (tm, ts) = mean_std(&summary.trail);
    csv.push_str(&format!("mean,{},{}\n", fmt_f64(gm), fmt_f64(tm)));
    csv.push_str(&format!("std,{},{}\n", fmt_f64(gs), fmt_f64(ts)));
    write(&args.out.join("summary.csv"), csv)?;

    write(&manifest_path, manifest(&cfg, &args.out, start, Some(unix_now())))?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub config: Option<PathBuf>,
    pub policy: PathBuf,
    pub encoder: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub mode: EvalMode,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Scores saved checkpoints on a query file (or the config's frozen
/// queries), writing `eval_<mode>.csv` and `histogram.csv`.
pub fn cmd_eval(args: &EvalArgs) -> Result<f64> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_seed(&mut cfg, args.seed);
    if args.mode == EvalMode::Trail && args.encoder.is_none() {
        return Err(Error::InvalidArgument("--mode trail needs --encoder".into()));
    }
    let seed = cfg.train.seeds[0];
    let env = cfg.train.env.build(seed)?;
    let state_dim = env.spec().state_dim;

    let policy = Policy::from_checkpoint(Checkpoint::load(&args.policy)?)?;
    let encoder = match &args.encoder {
        Some(p) => Some(TrajectoryEncoder::from_checkpoint(Checkpoint::load(p)?)?),
        None => None,
    };
    let queries = match &args.queries {
        Some(p) => load_queries(p, state_dim)?,
        None => frozen_queries(&cfg.train.env, cfg.train.n_eval_queries, cfg.train.query_seed)?,
    };
    let report = evaluate(&policy, encoder.as_ref(), &env, &queries, args.mode, seed)?;

    create_dir(&args.out)?;
    write(&args.out.join(format!("eval_{}.csv", args.mode)), report.outcomes_csv())?;
    let zeros = vec![0; report.length_histogram.len()];
    let rows = match args.mode {
        EvalMode::Gcsl => histogram_rows(&report.length_histogram, &zeros),
        EvalMode::Trail => histogram_rows(&zeros, &report.length_histogram),
    };
    write(&args.out.join("histogram.csv"), HistogramRow::to_csv(&rows))?;
    Ok(report.success_rate)
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Behavioral-cloning accuracy table `bc.csv`: one row per variant with
/// the mean, the population std and each seed's accuracy.
pub fn cmd_bc(args: &RunArgs) -> Result<PathBuf> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_seed(&mut cfg, args.seed);
    let results = run_bc(&cfg.bc_config(), &cfg.bc.variants)?;
    let mut csv = String::from("variant,mean,std");
    for s in &cfg.train.seeds {
        csv.push_str(&format!(",seed_{s}"));
    }
    csv.push('\n');
    for r in &results {
        csv.push_str(&format!("{},{},{}", r.variant, fmt_f64(r.mean), fmt_f64(r.std)));
        for a in &r.accuracies {
            csv.push_str(&format!(",{}", fmt_f64(*a)));
        }
        csv.push('\n');
    }
    create_dir(&args.out)?;
    let path = args.out.join("bc.csv");
    write(&path, csv)?;
    Ok(path)
}

/// Hindsight gap distribution `bias.csv` (`gap,empirical,analytic`).
pub fn cmd_bias(args: &RunArgs) -> Result<PathBuf> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_seed(&mut cfg, args.seed);
    let seed = cfg.train.seeds[0];
    let buffer = match cfg.bias.source {
        BiasSource::Fixed => fixed_length_buffer(cfg.bias.length, cfg.bias.episodes)?,
        BiasSource::Random => collect_corpus(&cfg.train.env, cfg.bias.episodes, cfg.train.post_process, seed)?,
    };
    let rows = run_bias_analysis(&buffer, cfg.bias.samples, &mut stream_rng(seed, 0))?;
    create_dir(&args.out)?;
    let path = args.out.join("bias.csv");
    write(&path, BiasRow::to_csv(&rows))?;
    Ok(path)
}

/// Encoder ablation `ablation_<axis>.csv` against a frozen policy.
pub fn cmd_ablate(args: &RunArgs, policy: &Path) -> Result<PathBuf> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_seed(&mut cfg, args.seed);
    let policy = Policy::from_checkpoint(Checkpoint::load(policy)?)?;
    let rows = run_ablation(&policy, &cfg.ablation_config(), cfg.ablate.axis)?;
    create_dir(&args.out)?;
    let path = args.out.join(format!("ablation_{}.csv", cfg.ablate.axis));
    write(&path, AblationRow::to_csv(&rows))?;
    Ok(path)
}
