//! Episode storage and hindsight relabeling.
//!
//! Index draws follow the GCSL convention over each stored trajectory's own
//! length `T` (its state count, 1-based): `i ~ U[1, T-1]`, `j ~ U[i+1, T]`,
//! and for sub-goal targets `k ~ U[i, j]`.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::env::{Action, StateVec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<StateVec>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn new(states: Vec<StateVec>, actions: Vec<Action>) -> Self {
        debug_assert!(states.is_empty() || actions.len() + 1 == states.len());
        Trajectory { states, actions }
    }

    pub fn start(s0: StateVec) -> Self {
        Trajectory {
            states: vec![s0],
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Action, next: StateVec) {
        self.actions.push(action);
        self.states.push(next);
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&StateVec> {
        self.states.last()
    }

    pub fn has_adjacent_duplicates(&self, tol: f64) -> bool {
        self.states.windows(2).any(|w| same_state(&w[0], &w[1], tol))
    }
}

pub fn same_state(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Drops every state equal to its predecessor together with the action that
/// led into it. States are compared coordinate-wise within `tol`.
pub fn trim(traj: &Trajectory, tol: f64) -> Trajectory {
    let mut states: Vec<StateVec> = Vec::with_capacity(traj.states.len());
    let mut actions = Vec::with_capacity(traj.actions.len());
    for (idx, s) in traj.states.iter().enumerate() {
        match states.last() {
            Some(prev) if same_state(prev, s, tol) => {}
            Some(_) => {
                actions.push(traj.actions[idx - 1].clone());
                states.push(s.clone());
            }
            None => states.push(s.clone()),
        }
    }
    Trajectory { states, actions }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PostProcess {
    /// Trim consecutive duplicates within the given tolerance before storing.
    Trim { tol: f64 },
    /// Store episodes as collected.
    Raw,
}

#[derive(Debug, Clone, Copy)]
pub struct GcslSample<'a> {
    pub s: &'a [f64],
    pub a: &'a Action,
    pub g: &'a [f64],
    pub gap: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrailSample<'a> {
    pub s: &'a [f64],
    pub g: &'a [f64],
    pub m: &'a [f64],
    pub t: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StatePair<'a> {
    pub s: &'a [f64],
    pub g: &'a [f64],
}

/// FIFO ring of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: VecDeque<Trajectory>,
    capacity: usize,
    post: PostProcess,
    inserted: u64,
    skipped: u64,
}

pub const DEFAULT_CAPACITY: usize = 2000;

impl ReplayBuffer {
    pub fn new(capacity: usize, post: PostProcess) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            episodes: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            post,
            inserted: 0,
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Episodes dropped because they collapsed to a single state.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Trajectory> {
        self.episodes.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Trajectory> {
        self.episodes.get(i)
    }

    /// Post-processes and stores `traj`; returns whether it was kept.
    pub fn push(&mut self, traj: &Trajectory) -> bool {
        let stored = match self.post {
            PostProcess::Trim { tol } => trim(traj, tol),
            PostProcess::Raw => traj.clone(),
        };
        if stored.len() < 2 {
            self.skipped += 1;
            return false;
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(stored);
        self.inserted += 1;
        true
    }

    /// `(episode, i, j)` with 0-based `i < j`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, usize) {
        let e = rng.random_range(0..self.episodes.len());
        let len = self.episodes[e].len();
        let i = rng.random_range(0..len - 1);
        let j = rng.random_range(i + 1..len);
        (e, i, j)
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.episodes.is_empty() {
            Err(Error::EmptyBuffer)
        } else {
            Ok(())
        }
    }

    pub fn sample_gcsl<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<GcslSample<'_>>> {
        self.ensure_nonempty()?;
        Ok((0..n)
            .map(|_| {
                let (e, i, j) = self.draw(rng);
                let tau = &self.episodes[e];
                GcslSample {
                    s: &tau.states[i],
                    a: &tau.actions[i],
                    g: &tau.states[j],
                    gap: j - i,
                }
            })
            .collect())
    }

    pub fn sample_trail<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<TrailSample<'_>>> {
        self.ensure_nonempty()?;
        Ok((0..n)
            .map(|_| {
                let (e, i, j) = self.draw(rng);
                let k = rng.random_range(i..=j);
                let tau = &self.episodes[e];
                TrailSample {
                    s: &tau.states[i],
                    g: &tau.states[j],
                    m: &tau.states[k],
                    t: (k - i) as f64 / (j - i) as f64,
                }
            })
            .collect())
    }

    /// Ordered within-episode pairs drawn exactly like [`Self::sample_gcsl`].
    pub fn sample_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<StatePair<'_>>> {
        self.ensure_nonempty()?;
        Ok((0..n)
            .map(|_| {
                let (e, i, j) = self.draw(rng);
                let tau = &self.episodes[e];
                StatePair {
                    s: &tau.states[i],
                    g: &tau.states[j],
                }
            })
            .collect())
    }

    /// Empirical distribution of `j - i` over `n_samples` GCSL draws.
    /// Entry `b` holds the mass of gap `b + 1`.
    pub fn gap_histogram<R: Rng + ?Sized>(&self, n_samples: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.ensure_nonempty()?;
        let max_gap = self.episodes.iter().map(|t| t.len() - 1).max().unwrap_or(1);
        let mut counts = vec![0u64; max_gap];
        for _ in 0..n_samples {
            let (_, i, j) = self.draw(rng);
            counts[j - i - 1] += 1;
        }
        Ok(counts
            .into_iter()
            .map(|c| c as f64 / n_samples.max(1) as f64)
            .collect())
    }

    /// Exact distribution of the suffix length `T - i` induced by the
    /// sampler over the current contents.
    pub fn suffix_length_distribution(&self) -> BTreeMap<usize, f64> {
        let mut dist = BTreeMap::new();
        let n = self.episodes.len() as f64;
        for tau in &self.episodes {
            let choices = tau.len() - 1;
            for suffix in 1..=choices {
                *dist.entry(suffix).or_insert(0.0) += 1.0 / (n * choices as f64);
            }
        }
        dist
    }

    /// Writes one JSON object per episode: states, actions, success flag.
    pub fn write_log(&self, path: &Path, success: impl Fn(&Trajectory) -> bool) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for tau in &self.episodes {
            let line = serde_json::to_string(&EpisodeRecord {
                states: &tau.states,
                actions: &tau.actions,
                success: success(tau),
            })
            .expect("episode records serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct EpisodeRecord<'a> {
    states: &'a [StateVec],
    actions: &'a [Action],
    success: bool,
}

/// Probability that a GCSL draw targets a goal exactly `k` steps away,
/// `sum_{l >= k} p_l / l`, given the suffix-length distribution `p`.
pub fn analytic_u_k(length_dist: &BTreeMap<usize, f64>, k: usize) -> f64 {
    length_dist
        .range(k.max(1)..)
        .map(|(len, p)| p / *len as f64)
        .sum()
}
