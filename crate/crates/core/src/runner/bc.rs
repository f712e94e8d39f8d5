//! Behavioral cloning from shortest-path demonstrations.
//!
//! The buffer is filled once with training demos and the usual hindsight
//! samplers drive the updates. Accuracy is measured on held-out demos as
//! agreement with the planner's first action.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::env::{Action, EnvConfig, GoalEnv};
use crate::error::{Error, Result};
use crate::gcsl::Policy;
use crate::nn::Adam;
use crate::replay::{PostProcess, ReplayBuffer, Trajectory};
use crate::runner::{derive_seed, mean_std, stream, stream_rng};
use crate::trail::{TrailLossConfig, TrajectoryEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcVariant {
    Gcsl,
    /// Sub-goal at `t = 1`, encoder trained without regularization.
    TrailT1,
    /// Sub-goal at `t = 0.5`, encoder trained without regularization.
    TrailT05,
    /// Sub-goal at `t = 0.5`, encoder trained with edge and self-consistency terms.
    TrailT05Reg,
}

impl BcVariant {
    pub const ALL: [BcVariant; 4] = [BcVariant::Gcsl, BcVariant::TrailT1, BcVariant::TrailT05, BcVariant::TrailT05Reg];

    fn t(self) -> Option<f64> {
        match self {
            BcVariant::Gcsl => None,
            BcVariant::TrailT1 => Some(1.0),
            BcVariant::TrailT05 | BcVariant::TrailT05Reg => Some(0.5),
        }
    }
}

impl fmt::Display for BcVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcVariant::Gcsl => "gcsl",
            BcVariant::TrailT1 => "trail_t1",
            BcVariant::TrailT05 => "trail_t05",
            BcVariant::TrailT05Reg => "trail_t05_reg",
        })
    }
}

impl FromStr for BcVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BcVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown BC variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcConfig {
    pub env: EnvConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// Gradient steps per network.
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub k: usize,
    /// Weight of both regularizers for the regularized variant.
    pub alpha: f64,
    pub seeds: Vec<u64>,
}

impl BcConfig {
    pub fn new(env: EnvConfig) -> Self {
        BcConfig {
            env,
            n_train: 400,
            n_test: 300,
            batches: 80_000,
            batch_size: 256,
            lr: 5e-4,
            hidden: 400,
            k: 2,
            alpha: 0.01,
            seeds: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcDataset {
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

fn query_key(t: &Trajectory) -> (Vec<u64>, Vec<u64>) {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    (bits(&t.states[0]), bits(t.last().expect("demo has states")))
}

/// Errors if any test `(start, goal)` also appears in the training split.
pub fn check_disjoint(ds: &BcDataset) -> Result<()> {
    let train: HashSet<_> = ds.train.iter().map(query_key).collect();
    match ds.test.iter().position(|t| train.contains(&query_key(t))) {
        Some(i) => Err(Error::Leakage(format!("test demo {i} repeats a training query"))),
        None => Ok(()),
    }
}

/// Shortest-path demos between distinct random queries; test queries never
/// repeat a training query.
pub fn build_bc_dataset(env: &mut GoalEnv, n_train: usize, n_test: usize) -> Result<BcDataset> {
    let grid = env
        .as_grid()
        .ok_or_else(|| Error::InvalidArgument("behavioral cloning needs a grid world".into()))?;
    let n_free = grid.free_cells().len();
    if n_train + n_test > n_free * (n_free - 1) {
        return Err(Error::InvalidArgument("not enough distinct queries for the requested split".into()));
    }
    let mut seen = HashSet::new();
    let mut demos = Vec::with_capacity(n_train + n_test);
    while demos.len() < n_train + n_test {
        let q = env.sample_queries(1).remove(0);
        let demo = env.shortest_path(&q.start, &q.goal)?;
        if seen.insert(query_key(&demo)) {
            demos.push(demo);
        }
    }
    let test = demos.split_off(n_train);
    let ds = BcDataset { train: demos, test };
    check_disjoint(&ds)?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcResult {
    pub variant: BcVariant,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

struct SeedModels {
    policy: Policy,
    plain: Option<TrajectoryEncoder>,
    regularized: Option<TrajectoryEncoder>,
}

fn train_models(cfg: &BcConfig, env: &GoalEnv, buffer: &ReplayBuffer, seed: u64, variants: &[BcVariant]) -> Result<SeedModels> {
    let spec = env.spec();
    let mut init = stream_rng(seed, stream::INIT);
    let mut policy = Policy::new(&spec, cfg.hidden, 1, &mut init)?;
    let mut plain = TrajectoryEncoder::new(spec.state_dim, cfg.hidden, cfg.k, &mut init)?;
    let mut regularized = TrajectoryEncoder::new(spec.state_dim, cfg.hidden, cfg.k, &mut init)?;

    let mut rng = stream_rng(seed, stream::SAMPLE);
    let mut opt = Adam::new(policy.net().num_params(), cfg.lr);
    for _ in 0..cfg.batches {
        let batch = buffer.sample_gcsl(cfg.batch_size, &mut rng)?;
        policy.train_step(&batch, &mut opt)?;
    }

    let fit = |enc: &mut TrajectoryEncoder, alpha: f64, stream_id: u64| -> Result<()> {
        let loss_cfg = TrailLossConfig {
            alpha_edge: alpha,
            alpha_sc: alpha,
            k: cfg.k,
            grad_clip: None,
        };
        let mut rng = stream_rng(derive_seed(seed, stream_id), stream::SAMPLE);
        let mut opt = Adam::new(enc.net().num_params(), cfg.lr);
        for _ in 0..cfg.batches {
            enc.train_step(buffer, &loss_cfg, cfg.batch_size, &mut opt, &mut rng)?;
        }
        Ok(())
    };
    let want_plain = variants.iter().any(|v| matches!(v, BcVariant::TrailT1 | BcVariant::TrailT05));
    let want_reg = variants.contains(&BcVariant::TrailT05Reg);
    if want_plain {
        fit(&mut plain, 0.0, 1)?;
    }
    if want_reg {
        fit(&mut regularized, cfg.alpha, 2)?;
    }
    Ok(SeedModels {
        policy,
        plain: want_plain.then_some(plain),
        regularized: want_reg.then_some(regularized),
    })
}

/// Fraction of test demos whose first action the variant reproduces.
fn accuracy(models: &SeedModels, variant: BcVariant, test: &[Trajectory]) -> Result<f64> {
    let s: Vec<&[f64]> = test.iter().map(|t| t.states[0].as_slice()).collect();
    let g: Vec<&[f64]> = test.iter().map(|t| t.last().unwrap().as_slice()).collect();
    let mut rng = stream_rng(0, stream::EVAL);
    let actions = match variant.t() {
        None => models.policy.act_batch(&s, &g, &mut rng, true)?,
        Some(t) => {
            let enc = if variant == BcVariant::TrailT05Reg {
                models.regularized.as_ref()
            } else {
                models.plain.as_ref()
            }
            .expect("encoder trained for requested variant");
            let ts = vec![t; test.len()];
            let m = enc.subgoals_batch(&s, &g, &ts, &mut rng, false)?;
            let m_refs: Vec<&[f64]> = m.iter().map(|v| v.as_slice()).collect();
            models.policy.act_batch(&s, &m_refs, &mut rng, true)?
        }
    };
    Ok(first_action_accuracy(test, &actions))
}

/// Trains one policy and (as needed) an unregularized and a regularized
/// encoder per seed, then scores every requested variant on that seed's
/// held-out demos.
pub fn run_bc(cfg: &BcConfig, variants: &[BcVariant]) -> Result<Vec<BcResult>> {
    let mut per_variant: Vec<Vec<f64>> = vec![Vec::new(); variants.len()];
    for &seed in &cfg.seeds {
        let mut env = cfg.env.build(derive_seed(seed, stream::DATA))?;
        let ds = build_bc_dataset(&mut env, cfg.n_train, cfg.n_test)?;
        let mut buffer = ReplayBuffer::new(cfg.n_train.max(1), PostProcess::Trim { tol: 0.0 });
        for demo in &ds.train {
            buffer.push(demo);
        }
        let models = train_models(cfg, &env, &buffer, seed, variants)?;
        for (acc, &v) in per_variant.iter_mut().zip(variants) {
            acc.push(accuracy(&models, v, &ds.test)?);
        }
    }
    Ok(variants
        .iter()
        .zip(per_variant)
        .map(|(&variant, accuracies)| {
            let (mean, std) = mean_std(&accuracies);
            BcResult {
                variant,
                accuracies,
                mean,
                std,
            }
        })
        .collect())
}

/// Fraction of demos whose first action equals the matching prediction.
pub fn first_action_accuracy(test: &[Trajectory], predicted: &[Action]) -> f64 {
    let hits = predicted
        .iter()
        .zip(test)
        .filter(|(a, t)| Some(*a) == t.actions.first())
        .count();
    hits as f64 / test.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_rooms() -> EnvConfig {
        EnvConfig::Rooms {
            rooms_x: 2,
            rooms_y: 2,
            room_size: 4,
            layout_seed: 1,
            horizon: 40,
        }
    }

    #[test]
    fn dataset_is_disjoint_and_shortest() {
        let mut env = small_rooms().build(5).unwrap();
        let ds = build_bc_dataset(&mut env, 40, 30).unwrap();
        assert_eq!((ds.train.len(), ds.test.len()), (40, 30));
        check_disjoint(&ds).unwrap();
        let grid = env.as_grid().unwrap();
        for d in ds.train.iter().chain(&ds.test) {
            let s = grid.cell_of(&d.states[0]).unwrap();
            let g = grid.cell_of(d.last().unwrap()).unwrap();
            assert_eq!(d.actions.len(), grid.layout().distances(s)[g]);
        }
        let replay: Vec<Action> = ds.test.iter().map(|t| t.actions[0].clone()).collect();
        assert_eq!(first_action_accuracy(&ds.test, &replay), 1.0);
    }

    #[test]
    fn leakage_is_detected() {
        let mut env = small_rooms().build(5).unwrap();
        let mut ds = build_bc_dataset(&mut env, 10, 5).unwrap();
        ds.test.push(ds.train[3].clone());
        assert!(matches!(check_disjoint(&ds), Err(Error::Leakage(_))));
    }

    #[test]
    fn tiny_run_reports_every_variant() {
        let cfg = BcConfig {
            n_train: 30,
            n_test: 20,
            batches: 20,
            batch_size: 16,
            hidden: 8,
            seeds: vec![0, 1],
            ..BcConfig::new(small_rooms())
        };
        let res = run_bc(&cfg, &BcVariant::ALL).unwrap();
        assert_eq!(res.len(), 4);
        for r in &res {
            assert_eq!(r.accuracies.len(), 2);
            assert!((0.0..=1.0).contains(&r.mean));
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in BcVariant::ALL {
            assert_eq!(v.to_string().parse::<BcVariant>().unwrap(), v);
        }
    }
}
