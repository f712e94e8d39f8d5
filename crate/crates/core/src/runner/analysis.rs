//! Hindsight gap statistics and encoder ablations against a frozen policy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::{fmt_f64, Action, EnvConfig, GoalEnv};
use crate::error::{Error, Result};
use crate::gcsl::Policy;
use crate::nn::{Adam, Checkpoint, DenseNet};
use crate::replay::{analytic_u_k, PostProcess, ReplayBuffer, Trajectory};
use crate::runner::eval::{evaluate, frozen_queries, EvalMode};
use crate::runner::train::{collect_episode, Collector};
use crate::runner::{derive_seed, mean_std, stream, stream_rng};
use crate::trail::{TrailLossConfig, TrajectoryEncoder};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow {
    pub gap: usize,
    pub empirical: f64,
    pub analytic: f64,
}

impl BiasRow {
    pub const HEADER: &'static str = "gap,empirical,analytic";

    pub fn to_csv(rows: &[BiasRow]) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in rows {
            out.push_str(&format!("{},{},{}\n", r.gap, fmt_f64(r.empirical), fmt_f64(r.analytic)));
        }
        out
    }
}

/// Empirical gap histogram over `n_samples` hindsight draws next to the
/// exact probability of each gap under the buffer's suffix-length
/// distribution.
pub fn run_bias_analysis<R: Rng + ?Sized>(buffer: &ReplayBuffer, n_samples: usize, rng: &mut R) -> Result<Vec<BiasRow>> {
    let hist = buffer.gap_histogram(n_samples, rng)?;
    let lengths = buffer.suffix_length_distribution();
    Ok(hist
        .iter()
        .enumerate()
        .map(|(b, &empirical)| BiasRow {
            gap: b + 1,
            empirical,
            analytic: analytic_u_k(&lengths, b + 1),
        })
        .collect())
}

/// `episodes` synthetic trajectories of exactly `length` distinct states.
pub fn fixed_length_buffer(length: usize, episodes: usize) -> Result<ReplayBuffer> {
    if length < 2 || episodes == 0 {
        return Err(Error::InvalidArgument("need length >= 2 and at least one episode".into()));
    }
    let mut buffer = ReplayBuffer::new(episodes, PostProcess::Trim { tol: 0.0 });
    for e in 0..episodes {
        let states = (0..length).map(|i| vec![e as f64, i as f64]).collect();
        let actions = vec![Action::Discrete(0); length - 1];
        buffer.push(&Trajectory::new(states, actions));
    }
    Ok(buffer)
}

/// Episodes from an untrained (all-zero, hence uniform) policy.
pub fn collect_corpus(env_cfg: &EnvConfig, episodes: usize, post_process: bool, seed: u64) -> Result<ReplayBuffer> {
    let mut env = env_cfg.build(derive_seed(seed, stream::ENV))?;
    let spec = env.spec();
    let template = Policy::new(&spec, 1, 1, &mut stream_rng(seed, stream::INIT))?;
    let policy = Policy::from_checkpoint(Checkpoint {
        head: template.head(),
        net: DenseNet::zeros(template.net().sizes())?,
    })?;
    let post = if post_process {
        PostProcess::Trim {
            tol: env.duplicate_tolerance(),
        }
    } else {
        PostProcess::Raw
    };
    let mut buffer = ReplayBuffer::new(episodes.max(1), post);
    let mut rng = stream_rng(seed, stream::ACT);
    for _ in 0..episodes {
        buffer.push(&collect_episode(&mut env, &policy, None, Collector::Gcsl, &mut rng)?);
    }
    Ok(buffer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    /// Mixture mode count in `{1, 2, 3, 5, 10}`.
    K,
    /// `(alpha_edge, alpha_sc)` in `{0, 0.01, 1}^2`.
    Alphas,
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::K => "k",
            AblationAxis::Alphas => "alphas",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(AblationAxis::K),
            "alphas" => Ok(AblationAxis::Alphas),
            other => Err(Error::InvalidArgument(format!("unknown ablation axis `{other}` (k|alphas)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub k: usize,
    pub alpha_edge: f64,
    pub alpha_sc: f64,
}

pub fn ablation_grid(axis: AblationAxis, base: &TrailLossConfig) -> Vec<GridPoint> {
    match axis {
        AblationAxis::K => [1, 2, 3, 5, 10]
            .into_iter()
            .map(|k| GridPoint {
                k,
                alpha_edge: base.alpha_edge,
                alpha_sc: base.alpha_sc,
            })
            .collect(),
        AblationAxis::Alphas => {
            let levels = [0.0, 0.01, 1.0];
            levels
                .iter()
                .flat_map(|&e| {
                    levels.iter().map(move |&c| GridPoint {
                        k: base.k,
                        alpha_edge: e,
                        alpha_sc: c,
                    })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub env: EnvConfig,
    /// Episodes collected by the frozen policy per seed.
    pub episodes: usize,
    pub updates_per_step: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub buffer_capacity: usize,
    pub n_eval_queries: usize,
    pub query_seed: u64,
    pub seeds: Vec<u64>,
    pub base: TrailLossConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub point: GridPoint,
    pub successes: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl AblationRow {
    pub const HEADER: &'static str = "k,alpha_edge,alpha_sc,mean,std";

    pub fn to_csv(rows: &[AblationRow]) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.point.k,
                fmt_f64(r.point.alpha_edge),
                fmt_f64(r.point.alpha_sc),
                fmt_f64(r.mean),
                fmt_f64(r.std)
            ));
        }
        out
    }
}

/// For each seed, records one stream of episodes collected by the frozen
/// `policy`; then for every grid point replays that stream into a fresh
/// buffer, training a fresh encoder with `updates_per_step` steps per
/// environment step, and scores trail-mode success on the frozen queries.
pub fn run_ablation(policy: &Policy, cfg: &AblationConfig, axis: AblationAxis) -> Result<Vec<AblationRow>> {
    let grid = ablation_grid(axis, &cfg.base);
    let queries = frozen_queries(&cfg.env, cfg.n_eval_queries, cfg.query_seed)?;
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for &seed in &cfg.seeds {
        let mut env: GoalEnv = cfg.env.build(derive_seed(seed, stream::ENV))?;
        if policy.state_dim() != env.spec().state_dim {
            return Err(Error::DimensionMismatch {
                context: "policy state width vs environment",
                expected: env.spec().state_dim,
                actual: policy.state_dim(),
            });
        }
        let mut act_rng = stream_rng(seed, stream::ACT);
        let episodes: Vec<Trajectory> = (0..cfg.episodes)
            .map(|_| collect_episode(&mut env, policy, None, Collector::Gcsl, &mut act_rng))
            .collect::<Result<_>>()?;
        let eval_env = cfg.env.build(derive_seed(seed, stream::EVAL))?;
        let post = PostProcess::Trim {
            tol: env.duplicate_tolerance(),
        };
        for (point, row) in grid.iter().zip(table.iter_mut()) {
            let loss_cfg = TrailLossConfig {
                k: point.k,
                alpha_edge: point.alpha_edge,
                alpha_sc: point.alpha_sc,
                grad_clip: cfg.base.grad_clip,
            };
            let mut init = stream_rng(seed, stream::INIT);
            let mut encoder = TrajectoryEncoder::new(env.spec().state_dim, cfg.hidden, point.k, &mut init)?;
            let mut opt = Adam::new(encoder.net().num_params(), cfg.lr);
            let mut rng = stream_rng(seed, stream::SAMPLE);
            let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, post);
            for (e, traj) in episodes.iter().enumerate() {
                buffer.push(traj);
                if buffer.is_empty() {
                    continue;
                }
                for _ in 0..traj.actions.len() * cfg.updates_per_step {
                    encoder
                        .train_step(&buffer, &loss_cfg, cfg.batch_size, &mut opt, &mut rng)
                        .map_err(|err| Error::Diverged {
                            episode: e,
                            detail: err.to_string(),
                        })?;
                }
            }
            let report = evaluate(policy, Some(&encoder), &eval_env, &queries, EvalMode::Trail, seed)?;
            row.push(report.success_rate);
        }
    }
    Ok(grid
        .into_iter()
        .zip(table)
        .map(|(point, successes)| {
            let (mean, std) = mean_std(&successes);
            AblationRow {
                point,
                successes,
                mean,
                std,
            }
        })
        .collect())
}
