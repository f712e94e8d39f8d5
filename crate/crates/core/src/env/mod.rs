//! Goal-conditioned environments.
//!
//! Every observation is a normalized coordinate vector in `[-1, 1]^d`.
//! Environments own their RNG; identical seeds and action sequences replay
//! identically.

pub mod continuous;
pub mod grid;

use serde::{Deserialize, Serialize};

pub use continuous::ContinuousRooms;
pub use grid::{GridLayout, GridWorld};

use crate::error::{Error, Result};
use crate::replay::Trajectory;

pub type StateVec = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete { n_actions: usize },
    Continuous { dim: usize, max_norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalEnvSpec {
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub horizon: usize,
    /// Zero for exact-match (discrete) environments.
    pub goal_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalQuery {
    pub id: usize,
    pub start: StateVec,
    pub goal: StateVec,
}

/// Which environment to build, with its construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Rooms {
        rooms_x: usize,
        rooms_y: usize,
        room_size: usize,
        layout_seed: u64,
        horizon: usize,
    },
    DoubleSpiral {
        turns: usize,
        horizon: usize,
    },
    ContinuousRooms {
        noise_sigma: f64,
        door_width: f64,
        horizon: usize,
    },
}

impl EnvConfig {
    pub fn nine_rooms() -> Self {
        EnvConfig::Rooms {
            rooms_x: 3,
            rooms_y: 3,
            room_size: 5,
            layout_seed: 0,
            horizon: 50,
        }
    }

    pub fn large_rooms() -> Self {
        EnvConfig::Rooms {
            rooms_x: 5,
            rooms_y: 5,
            room_size: 15,
            layout_seed: 0,
            horizon: 400,
        }
    }

    pub fn double_spiral() -> Self {
        EnvConfig::DoubleSpiral {
            turns: 7,
            horizon: 500,
        }
    }

    pub fn continuous_rooms(noise_sigma: f64) -> Self {
        EnvConfig::ContinuousRooms {
            noise_sigma,
            door_width: continuous::DEFAULT_DOOR_WIDTH,
            horizon: 50,
        }
    }

    pub fn horizon(&self) -> usize {
        match *self {
            EnvConfig::Rooms { horizon, .. }
            | EnvConfig::DoubleSpiral { horizon, .. }
            | EnvConfig::ContinuousRooms { horizon, .. } => horizon,
        }
    }

    pub fn build(&self, seed: u64) -> Result<GoalEnv> {
        let horizon = self.horizon();
        if horizon < 2 {
            return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
        }
        Ok(match *self {
            EnvConfig::Rooms {
                rooms_x,
                rooms_y,
                room_size,
                layout_seed,
                ..
            } => GoalEnv::Grid(GridWorld::new(
                GridLayout::rooms(rooms_x, rooms_y, room_size, layout_seed)?,
                horizon,
                seed,
            )),
            EnvConfig::DoubleSpiral { turns, .. } => {
                GoalEnv::Grid(GridWorld::new(GridLayout::double_spiral(turns, 1, 0)?, horizon, seed))
            }
            EnvConfig::ContinuousRooms {
                noise_sigma,
                door_width,
                ..
            } => GoalEnv::Continuous(ContinuousRooms::new(noise_sigma, door_width, horizon, seed)?),
        })
    }
}

#[derive(Debug, Clone)]
pub enum GoalEnv {
    Grid(GridWorld),
    Continuous(ContinuousRooms),
}

impl GoalEnv {
    pub fn spec(&self) -> GoalEnvSpec {
        match self {
            GoalEnv::Grid(w) => GoalEnvSpec {
                state_dim: 2,
                action_space: ActionSpace::Discrete {
                    n_actions: grid::N_MOVES,
                },
                horizon: w.horizon(),
                goal_tolerance: 0.0,
            },
            GoalEnv::Continuous(c) => GoalEnvSpec {
                state_dim: 2,
                action_space: ActionSpace::Continuous {
                    dim: 2,
                    max_norm: continuous::MAX_ACTION_NORM,
                },
                horizon: c.horizon(),
                goal_tolerance: continuous::GOAL_TOLERANCE,
            },
        }
    }

    pub fn horizon(&self) -> usize {
        self.spec().horizon
    }

    pub fn reseed(&mut self, seed: u64) {
        match self {
            GoalEnv::Grid(w) => w.reseed(seed),
            GoalEnv::Continuous(c) => c.reseed(seed),
        }
    }

    /// Starts an episode from `query`, or from a fresh `(start, goal)` pair
    /// drawn with the environment's RNG.
    pub fn reset(&mut self, query: Option<&GoalQuery>) -> Result<(StateVec, StateVec)> {
        if let Some(q) = query {
            if q.start.len() != 2 || q.goal.len() != 2 {
                return Err(Error::InvalidQuery(format!("query {} has the wrong dimension", q.id)));
            }
        }
        let pair = match self {
            GoalEnv::Grid(w) => w.reset(query)?,
            GoalEnv::Continuous(c) => c.reset(query)?,
        };
        if self.is_success(&pair.0, &pair.1) {
            return Err(Error::InvalidQuery("start already satisfies the goal".into()));
        }
        Ok(pair)
    }

    /// Advances one step; once the goal is reached the state no longer changes.
    pub fn step(&mut self, action: &Action) -> Result<StateVec> {
        match self {
            GoalEnv::Grid(w) => w.step(action),
            GoalEnv::Continuous(c) => c.step(action),
        }
    }

    /// The commanded part of `action` that the dynamics actually use:
    /// continuous actions are clipped to the norm bound, discrete ones pass
    /// through. Storing this keeps out-of-range samples from becoming labels.
    pub fn executed_action(&self, action: &Action) -> Action {
        match (self, action) {
            (GoalEnv::Continuous(_), Action::Continuous(a)) if a.len() == 2 => {
                Action::Continuous(continuous::clip_norm([a[0], a[1]], continuous::MAX_ACTION_NORM).to_vec())
            }
            _ => action.clone(),
        }
    }

    pub fn is_success(&self, s: &[f64], g: &[f64]) -> bool {
        match self {
            GoalEnv::Grid(_) => s == g,
            GoalEnv::Continuous(c) => c.is_success(s, g),
        }
    }

    pub fn is_valid_state(&self, s: &[f64]) -> bool {
        match self {
            GoalEnv::Grid(w) => w.cell_of(s).is_some(),
            GoalEnv::Continuous(c) => c.is_valid(s),
        }
    }

    /// Draws `n` evaluation queries from the environment's own start/goal
    /// distribution.
    pub fn sample_queries(&mut self, n: usize) -> Vec<GoalQuery> {
        (0..n)
            .map(|id| {
                let (start, goal) = match self {
                    GoalEnv::Grid(w) => {
                        let (s, g) = w.sample_pair();
                        (w.observe(s), w.observe(g))
                    }
                    GoalEnv::Continuous(c) => {
                        let (s, g) = c.sample_pair();
                        (s.to_vec(), g.to_vec())
                    }
                };
                GoalQuery { id, start, goal }
            })
            .collect()
    }

    pub fn shortest_path(&self, s: &[f64], g: &[f64]) -> Result<Trajectory> {
        match self {
            GoalEnv::Grid(w) => w.shortest_path(s, g),
            GoalEnv::Continuous(_) => Err(Error::InvalidArgument(
                "shortest paths are only defined for grid worlds".into(),
            )),
        }
    }

    /// Trimming tolerance for consecutive-duplicate detection.
    pub fn duplicate_tolerance(&self) -> f64 {
        match self {
            GoalEnv::Grid(_) => 0.0,
            GoalEnv::Continuous(_) => 1e-9,
        }
    }

    pub fn as_grid(&self) -> Option<&GridWorld> {
        match self {
            GoalEnv::Grid(w) => Some(w),
            GoalEnv::Continuous(_) => None,
        }
    }
}

/// `id,s0..,g0..` with 17 significant digits per value.
pub fn write_queries_csv(queries: &[GoalQuery], state_dim: usize) -> String {
    let mut out = String::from("id");
    for i in 0..state_dim {
        out.push_str(&format!(",s{i}"));
    }
    for i in 0..state_dim {
        out.push_str(&format!(",g{i}"));
    }
    out.push('\n');
    for q in queries {
        out.push_str(&q.id.to_string());
        for v in q.start.iter().chain(&q.goal) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_queries_csv(text: &str, state_dim: usize) -> Result<Vec<GoalQuery>> {
    let mut lines = text.lines().enumerate();
    let expected_cols = 1 + 2 * state_dim;
    match lines.next() {
        Some((_, header)) if header.split(',').count() == expected_cols && header.starts_with("id") => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected a header with {expected_cols} columns starting with `id`"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: idx + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(err(format!("expected {expected_cols} fields, got {}", fields.len())));
        }
        let id = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| err(format!("invalid id {:?}", fields[0])))?;
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(GoalQuery {
            id,
            start: values[..state_dim].to_vec(),
            goal: values[state_dim..].to_vec(),
        });
    }
    Ok(out)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
