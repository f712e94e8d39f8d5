//! Greedy evaluation on frozen start/goal queries.

use std::fmt;
use std::str::FromStr;

use crate::env::{Action, EnvConfig, GoalEnv, GoalQuery};
use crate::error::{Error, Result};
use crate::gcsl::Policy;
use crate::replay::Trajectory;
use crate::runner::{derive_seed, stream, stream_rng};
use crate::trail::{get_action_batch, TrajectoryEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Act on the goal directly.
    Gcsl,
    /// Act on the encoder's sub-goal.
    Trail,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Gcsl => "gcsl",
            EvalMode::Trail => "trail",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcsl" => Ok(EvalMode::Gcsl),
            "trail" => Ok(EvalMode::Trail),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}` (gcsl|trail)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub id: usize,
    pub success: bool,
    /// Actions taken; for successes, the step count to first success.
    pub steps: usize,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub success_rate: f64,
    pub outcomes: Vec<QueryOutcome>,
    /// `length_histogram[l - 1]` counts successes that took `l` steps,
    /// for `l` in `1..=horizon`.
    pub length_histogram: Vec<usize>,
}

impl EvalReport {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|o| o.success).count()
    }

    /// `id,success,steps` rows with a header.
    pub fn outcomes_csv(&self) -> String {
        let mut out = String::from("id,success,steps\n");
        for o in &self.outcomes {
            out.push_str(&format!("{},{},{}\n", o.id, u8::from(o.success), o.steps));
        }
        out
    }
}

/// Queries shared by every seed of an experiment: drawn from the
/// environment's own start/goal distribution with a dedicated seed.
pub fn frozen_queries(env: &EnvConfig, n: usize, query_seed: u64) -> Result<Vec<GoalQuery>> {
    Ok(env.build(derive_seed(query_seed, stream::EVAL))?.sample_queries(n))
}

/// Rolls out every query greedily (deterministic policy, and for `Trail`
/// the mean of the best mode), stopping at the first success or after the
/// horizon. Each query runs in its own copy of `env` reseeded from
/// `(seed, id)`, so outcomes do not depend on batching or thread count.
///
/// `TRAIL_THREADS` (default 1) splits the queries over that many threads.
pub fn evaluate(
    policy: &Policy,
    encoder: Option<&TrajectoryEncoder>,
    env: &GoalEnv,
    queries: &[GoalQuery],
    mode: EvalMode,
    seed: u64,
) -> Result<EvalReport> {
    if mode == EvalMode::Trail && encoder.is_none() {
        return Err(Error::InvalidArgument("trail evaluation needs an encoder".into()));
    }
    let spec = env.spec();
    if policy.state_dim() != spec.state_dim {
        return Err(Error::DimensionMismatch {
            context: "policy state width vs environment",
            expected: spec.state_dim,
            actual: policy.state_dim(),
        });
    }
    if let Some(enc) = encoder {
        if enc.state_dim() != spec.state_dim {
            return Err(Error::DimensionMismatch {
                context: "encoder state width vs environment",
                expected: spec.state_dim,
                actual: enc.state_dim(),
            });
        }
    }
    let threads = std::env::var("TRAIL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1)
        .clamp(1, queries.len().max(1));
    let outcomes = if threads == 1 {
        rollout_lockstep(policy, encoder, env, queries, mode, seed)?
    } else {
        let chunk = queries.len().div_ceil(threads);
        let parts: Vec<Result<Vec<QueryOutcome>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = queries
                .chunks(chunk)
                .map(|qs| scope.spawn(move || rollout_lockstep(policy, encoder, env, qs, mode, seed)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
        });
        let mut all = Vec::with_capacity(queries.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    let horizon = spec.horizon;
    let mut length_histogram = vec![0usize; horizon];
    for o in outcomes.iter().filter(|o| o.success && o.steps >= 1) {
        length_histogram[o.steps.min(horizon) - 1] += 1;
    }
    let success_rate = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64
    };
    Ok(EvalReport {
        mode,
        success_rate,
        outcomes,
        length_histogram,
    })
}

fn rollout_lockstep(
    policy: &Policy,
    encoder: Option<&TrajectoryEncoder>,
    env: &GoalEnv,
    queries: &[GoalQuery],
    mode: EvalMode,
    seed: u64,
) -> Result<Vec<QueryOutcome>> {
    let horizon = env.horizon();
    let mut envs = Vec::with_capacity(queries.len());
    let mut trajs = Vec::with_capacity(queries.len());
    let mut goals = Vec::with_capacity(queries.len());
    for q in queries {
        let mut e = env.clone();
        e.reseed(derive_seed(seed ^ (q.id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), stream::EVAL));
        let (s, g) = e.reset(Some(q))?;
        envs.push(e);
        trajs.push(Trajectory::start(s));
        goals.push(g);
    }
    let mut done = vec![false; queries.len()];
    let mut success = vec![false; queries.len()];
    // greedy acting draws nothing; the rng only satisfies the signature
    let mut rng = stream_rng(seed, stream::EVAL);
    for i in 0..horizon {
        let active: Vec<usize> = (0..queries.len()).filter(|&r| !done[r]).collect();
        if active.is_empty() {
            break;
        }
        let s: Vec<&[f64]> = active.iter().map(|&r| trajs[r].last().unwrap().as_slice()).collect();
        let g: Vec<&[f64]> = active.iter().map(|&r| goals[r].as_slice()).collect();
        let actions: Vec<Action> = match mode {
            EvalMode::Gcsl => policy.act_batch(&s, &g, &mut rng, true)?,
            EvalMode::Trail => {
                let steps = vec![i; active.len()];
                get_action_batch(policy, encoder.unwrap(), &s, &g, &steps, horizon, &mut rng, false)?
            }
        };
        for (a, &r) in actions.into_iter().zip(&active) {
            let next = envs[r].step(&a)?;
            let hit = envs[r].is_success(&next, &goals[r]);
            trajs[r].push(a, next);
            if hit {
                done[r] = true;
                success[r] = true;
            }
        }
    }
    Ok(queries
        .iter()
        .enumerate()
        .map(|(r, q)| {
            let trajectory = std::mem::replace(&mut trajs[r], Trajectory::new(Vec::new(), Vec::new()));
            QueryOutcome {
                id: q.id,
                success: success[r],
                steps: trajectory.actions.len(),
                trajectory,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRow {
    pub bin_lo: usize,
    pub bin_hi: usize,
    pub count_gcsl: usize,
    pub count_trail: usize,
}

/// Unit-width success-length bins `[l, l + 1)` for `l = 1..=horizon`.
pub fn histogram_rows(gcsl: &[usize], trail: &[usize]) -> Vec<HistogramRow> {
    let n = gcsl.len().max(trail.len());
    (0..n)
        .map(|b| HistogramRow {
            bin_lo: b + 1,
            bin_hi: b + 2,
            count_gcsl: gcsl.get(b).copied().unwrap_or(0),
            count_trail: trail.get(b).copied().unwrap_or(0),
        })
        .collect()
}

impl HistogramRow {
    pub const HEADER: &'static str = "bin_lo,bin_hi,count_gcsl,count_trail";

    pub fn to_csv(rows: &[HistogramRow]) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in rows {
            out.push_str(&format!("{},{},{},{}\n", r.bin_lo, r.bin_hi, r.count_gcsl, r.count_trail));
        }
        out
    }
}
