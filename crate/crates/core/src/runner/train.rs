//! Online collect-then-optimize loop shared by GCSL and the sub-goal encoder.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::{fmt_f64, EnvConfig, GoalEnv, GoalQuery};
use crate::error::{Error, Result};
use crate::gcsl::Policy;
use crate::nn::Adam;
use crate::replay::{PostProcess, ReplayBuffer, Trajectory, DEFAULT_CAPACITY};
use crate::runner::eval::{evaluate, frozen_queries, EvalMode, EvalReport};
use crate::runner::{derive_seed, stream, stream_rng};
use crate::trail::{get_action, TrailLossConfig, TrailLosses, TrajectoryEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collector {
    Gcsl,
    Trail,
}

impl fmt::Display for Collector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Collector::Gcsl => "gcsl",
            Collector::Trail => "trail",
        })
    }
}

impl FromStr for Collector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcsl" => Ok(Collector::Gcsl),
            "trail" => Ok(Collector::Trail),
            other => Err(Error::InvalidArgument(format!("unknown collector `{other}` (gcsl|trail)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub episodes: usize,
    /// Gradient steps per environment step, for each network.
    pub updates_per_step: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub buffer_capacity: usize,
    /// Trim consecutive duplicate states before storing episodes.
    pub post_process: bool,
    pub collector: Collector,
    pub trail: TrailLossConfig,
    /// Train the sub-goal encoder alongside the policy.
    pub train_encoder: bool,
    pub hidden: usize,
    /// Mixture modes of the continuous-action policy head.
    pub policy_k: usize,
    /// Evaluate every this many episodes (0: only after the last one).
    pub eval_every: usize,
    pub n_eval_queries: usize,
    /// Seed of the frozen evaluation queries (shared across run seeds).
    pub query_seed: u64,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::nine_rooms(),
            episodes: 1000,
            updates_per_step: 1,
            batch_size: 256,
            lr: 5e-4,
            buffer_capacity: DEFAULT_CAPACITY,
            post_process: true,
            collector: Collector::Gcsl,
            trail: TrailLossConfig::default(),
            train_encoder: true,
            hidden: 400,
            policy_k: 1,
            eval_every: 100,
            n_eval_queries: 100,
            query_seed: 0,
            seeds: vec![0, 1, 2],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train.updates_per_step", self.updates_per_step),
            ("train.batch_size", self.batch_size),
            ("train.buffer_capacity", self.buffer_capacity),
            ("net.hidden", self.hidden),
            ("net.policy_k", self.policy_k),
            ("trail.k", self.trail.k),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(self.trail.alpha_edge >= 0.0 && self.trail.alpha_sc >= 0.0) {
            return Err(Error::InvalidArgument("trail alphas must be non-negative".into()));
        }
        if self.collector == Collector::Trail && !self.train_encoder {
            return Err(Error::InvalidArgument(
                "collector = trail needs the encoder to be trained".into(),
            ));
        }
        Ok(())
    }

    fn post(&self, env: &GoalEnv) -> PostProcess {
        if self.post_process {
            PostProcess::Trim {
                tol: env.duplicate_tolerance(),
            }
        } else {
            PostProcess::Raw
        }
    }
}

/// One row per evaluation point. Losses are means over the updates since
/// the previous row (NaN when none ran); success rates are NaN for a mode
/// that was not evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub env_steps: u64,
    pub gcsl_loss: f64,
    pub trail_sub_loss: f64,
    pub trail_edge_loss: f64,
    pub trail_sc_loss: f64,
    pub eval_success_gcsl: f64,
    pub eval_success_trail: f64,
}

pub const METRICS_HEADER: &str =
    "episode,env_steps,gcsl_loss,trail_sub_loss,trail_edge_loss,trail_sc_loss,eval_success_gcsl,eval_success_trail";

pub fn write_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.episode,
            r.env_steps,
            fmt_f64(r.gcsl_loss),
            fmt_f64(r.trail_sub_loss),
            fmt_f64(r.trail_edge_loss),
            fmt_f64(r.trail_sc_loss),
            fmt_f64(r.eval_success_gcsl),
            fmt_f64(r.eval_success_trail),
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub policy: Policy,
    pub encoder: TrajectoryEncoder,
    pub metrics: Vec<MetricsRow>,
    /// Evaluations after the final episode (absent when `episodes == 0`).
    pub final_gcsl: Option<EvalReport>,
    pub final_trail: Option<EvalReport>,
    pub buffer: ReplayBuffer,
}

/// Rolls out one episode from a fresh `rho_0` reset, sampling actions
/// (and sub-goals for the `Trail` collector). Stops at the first success.
/// Continuous actions are stored as executed, after the norm clip.
pub fn collect_episode<R: Rng + ?Sized>(
    env: &mut GoalEnv,
    policy: &Policy,
    encoder: Option<&TrajectoryEncoder>,
    collector: Collector,
    rng: &mut R,
) -> Result<Trajectory> {
    let horizon = env.horizon();
    let (s, g) = env.reset(None)?;
    let mut traj = Trajectory::start(s);
    for i in 0..horizon {
        let s = traj.last().unwrap();
        let a = match (collector, encoder) {
            (Collector::Gcsl, _) => policy.act(s, &g, rng, false)?,
            (Collector::Trail, Some(enc)) => get_action(policy, enc, s, &g, i, horizon, rng, true)?,
            (Collector::Trail, None) => {
                return Err(Error::InvalidArgument("trail collector needs an encoder".into()))
            }
        };
        let next = env.step(&a)?;
        let hit = env.is_success(&next, &g);
        traj.push(env.executed_action(&a), next);
        if hit {
            break;
        }
    }
    Ok(traj)
}

#[derive(Default)]
struct LossAccumulator {
    gcsl: (f64, usize),
    sub: (f64, usize),
    edge: (f64, usize),
    sc: (f64, usize),
}

impl LossAccumulator {
    fn add(slot: &mut (f64, usize), v: f64) {
        if v.is_finite() {
            slot.0 += v;
            slot.1 += 1;
        }
    }

    fn mean(slot: (f64, usize)) -> f64 {
        if slot.1 == 0 {
            f64::NAN
        } else {
            slot.0 / slot.1 as f64
        }
    }

    fn take(&mut self) -> [f64; 4] {
        let out = [
            Self::mean(self.gcsl),
            Self::mean(self.sub),
            Self::mean(self.edge),
            Self::mean(self.sc),
        ];
        *self = LossAccumulator::default();
        out
    }
}

/// Trains one seed. Each episode is collected with the current networks,
/// pushed into the buffer, and followed by `updates_per_step` policy steps
/// and `updates_per_step` encoder steps per environment step it took.
pub fn train(cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let queries = frozen_queries(&cfg.env, cfg.n_eval_queries, cfg.query_seed)?;
    train_with_queries(cfg, seed, &queries)
}

/// [`train`] scored on caller-supplied evaluation queries.
pub fn train_with_queries(cfg: &TrainConfig, seed: u64, queries: &[GoalQuery]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = cfg.env.build(derive_seed(seed, stream::ENV))?;
    let spec = env.spec();
    let eval_env = cfg.env.build(derive_seed(seed, stream::EVAL))?;

    let mut init_rng = stream_rng(seed, stream::INIT);
    let mut policy = Policy::new(&spec, cfg.hidden, cfg.policy_k, &mut init_rng)?;
    let mut encoder = TrajectoryEncoder::new(spec.state_dim, cfg.hidden, cfg.trail.k, &mut init_rng)?;
    let mut policy_opt = Adam::new(policy.net().num_params(), cfg.lr);
    let mut encoder_opt = Adam::new(encoder.net().num_params(), cfg.lr);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.post(&env));
    let mut act_rng = stream_rng(seed, stream::ACT);
    let mut sample_rng = stream_rng(seed, stream::SAMPLE);
    // separate stream, so GCSL updates do not depend on whether the encoder trains
    let mut encoder_rng = stream_rng(seed, stream::ENCODER);

    let mut metrics = Vec::new();
    let mut acc = LossAccumulator::default();
    let mut env_steps = 0u64;
    let mut final_gcsl = None;
    let mut final_trail = None;

    for episode in 0..cfg.episodes {
        let enc = cfg.train_encoder.then_some(&encoder);
        let traj = collect_episode(&mut env, &policy, enc, cfg.collector, &mut act_rng)?;
        let steps = traj.actions.len();
        env_steps += steps as u64;
        buffer.push(&traj);

        if !buffer.is_empty() {
            let diverged = |e: Error| Error::Diverged {
                episode,
                detail: e.to_string(),
            };
            for _ in 0..steps * cfg.updates_per_step {
                let batch = buffer.sample_gcsl(cfg.batch_size, &mut sample_rng)?;
                let loss = policy.train_step(&batch, &mut policy_opt).map_err(diverged)?;
                LossAccumulator::add(&mut acc.gcsl, loss);
                if cfg.train_encoder {
                    let TrailLosses { sub, edge, sc, .. } = encoder
                        .train_step(&buffer, &cfg.trail, cfg.batch_size, &mut encoder_opt, &mut encoder_rng)
                        .map_err(diverged)?;
                    LossAccumulator::add(&mut acc.sub, sub);
                    LossAccumulator::add(&mut acc.edge, edge);
                    LossAccumulator::add(&mut acc.sc, sc);
                }
            }
        }

        let last = episode + 1 == cfg.episodes;
        let due = cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0;
        if due || last {
            let g = evaluate(&policy, None, &eval_env, queries, EvalMode::Gcsl, seed)?;
            let t = if cfg.train_encoder {
                Some(evaluate(&policy, Some(&encoder), &eval_env, queries, EvalMode::Trail, seed)?)
            } else {
                None
            };
            let [gl, sl, el, cl] = acc.take();
            metrics.push(MetricsRow {
                episode: episode + 1,
                env_steps,
                gcsl_loss: gl,
                trail_sub_loss: sl,
                trail_edge_loss: el,
                trail_sc_loss: cl,
                eval_success_gcsl: g.success_rate,
                eval_success_trail: t.as_ref().map_or(f64::NAN, |r| r.success_rate),
            });
            if last {
                final_gcsl = Some(g);
                final_trail = t;
            }
        }
    }

    Ok(TrainOutcome {
        seed,
        policy,
        encoder,
        metrics,
        final_gcsl,
        final_trail,
        buffer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::same_state;

    fn tiny() -> TrainConfig {
        TrainConfig {
            env: EnvConfig::Rooms {
                rooms_x: 2,
                rooms_y: 1,
                room_size: 3,
                layout_seed: 0,
                horizon: 12,
            },
            episodes: 6,
            batch_size: 16,
            hidden: 8,
            eval_every: 3,
            n_eval_queries: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn gcsl_does_not_depend_on_encoder_training() {
        let with = train(&tiny(), 2).unwrap();
        let without = train(&TrainConfig { train_encoder: false, ..tiny() }, 2).unwrap();
        assert_eq!(with.policy, without.policy);
        let gcsl = |o: &TrainOutcome| o.metrics.iter().map(|r| (r.gcsl_loss, r.eval_success_gcsl)).collect::<Vec<_>>();
        assert_eq!(gcsl(&with), gcsl(&without));
    }

    #[test]
    fn zero_episodes_returns_untrained_nets() {
        let cfg = TrainConfig { episodes: 0, ..tiny() };
        let out = train(&cfg, 0).unwrap();
        assert!(out.metrics.is_empty());
        let mut init_rng = stream_rng(0, stream::INIT);
        let spec = cfg.env.build(0).unwrap().spec();
        let fresh = Policy::new(&spec, cfg.hidden, cfg.policy_k, &mut init_rng).unwrap();
        assert_eq!(out.policy, fresh);
    }

    #[test]
    fn collected_episodes_replay_through_the_env() {
        let cfg = tiny();
        let mut env = cfg.env.build(4).unwrap();
        let mut rng = stream_rng(4, stream::ACT);
        let spec = env.spec();
        let policy = Policy::new(&spec, 8, 1, &mut rng).unwrap();
        for _ in 0..20 {
            let traj = collect_episode(&mut env, &policy, None, Collector::Gcsl, &mut rng).unwrap();
            assert!(traj.actions.len() <= spec.horizon);
            let grid = env.as_grid().unwrap();
            for (w, a) in traj.states.windows(2).zip(&traj.actions) {
                let cell = grid.cell_of(&w[0]).unwrap();
                let idx = match a {
                    crate::env::Action::Discrete(i) => *i,
                    _ => unreachable!(),
                };
                let next = grid.layout().neighbor(cell, idx);
                assert!(same_state(&grid.observe(next), &w[1], 0.0));
            }
        }
    }

    #[test]
    fn metrics_rows_and_determinism() {
        let cfg = tiny();
        let a = train(&cfg, 3).unwrap();
        let b = train(&cfg, 3).unwrap();
        assert_eq!(a.metrics.len(), 2);
        assert_eq!(write_metrics_csv(&a.metrics), write_metrics_csv(&b.metrics));
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.encoder, b.encoder);
    }

    #[test]
    fn trail_collector_requires_encoder_training() {
        let cfg = TrainConfig {
            collector: Collector::Trail,
            train_encoder: false,
            ..tiny()
        };
        assert!(train(&cfg, 0).is_err());
        let cfg = TrainConfig { collector: Collector::Trail, ..tiny() };
        assert_eq!(train(&cfg, 0).unwrap().metrics.len(), 2);
    }
}
