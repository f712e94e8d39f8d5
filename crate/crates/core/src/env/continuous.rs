//! Continuous 2x2 rooms in `[-1, 1]^2`.
//!
//! Walls are the lines `x = 0` and `y = 0`. Each of the four wall segments
//! has a door gap of width `door_width` centred at `+-0.5` along the segment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::{Action, GoalQuery, StateVec};
use crate::error::{Error, Result};

pub const MAX_ACTION_NORM: f64 = 0.1;
pub const GOAL_TOLERANCE: f64 = 0.2;
pub const DEFAULT_DOOR_WIDTH: f64 = 0.2;
const DOOR_CENTERS: [f64; 2] = [-0.5, 0.5];

#[derive(Debug, Clone)]
pub struct ContinuousRooms {
    noise_sigma: f64,
    door_width: f64,
    horizon: usize,
    rng: ChaCha8Rng,
    pos: Option<[f64; 2]>,
    goal: Option<[f64; 2]>,
}

impl ContinuousRooms {
    pub fn new(noise_sigma: f64, door_width: f64, horizon: usize, seed: u64) -> Result<Self> {
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be non-negative, got {noise_sigma}"
            )));
        }
        if !(door_width > 0.0 && door_width < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "door_width must be in (0, 1), got {door_width}"
            )));
        }
        Ok(ContinuousRooms {
            noise_sigma,
            door_width,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: None,
            goal: None,
        })
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn door_width(&self) -> f64 {
        self.door_width
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn in_door(&self, along: f64) -> Option<usize> {
        DOOR_CENTERS
            .iter()
            .position(|c| (along - c).abs() < 0.5 * self.door_width)
    }

    /// True when `p` lies in bounds and off the wall lines (door gaps are free).
    pub fn is_valid(&self, p: &[f64]) -> bool {
        if p.len() != 2 || !p.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)) {
            return false;
        }
        let on_vertical = p[0] == 0.0 && self.in_door(p[1]).is_none();
        let on_horizontal = p[1] == 0.0 && self.in_door(p[0]).is_none();
        !(on_vertical || on_horizontal)
    }

    /// Whether moving along one axis from `from` to `to` (the other coordinate
    /// fixed at `across`) touches a wall.
    fn axis_blocked(&self, from: f64, to: f64, across: f64) -> bool {
        if !(-1.0..=1.0).contains(&to) {
            return true;
        }
        let (lo, hi) = if from <= to { (from, to) } else { (to, from) };
        if lo <= 0.0 && 0.0 <= hi && self.in_door(across).is_none() {
            return true;
        }
        if across == 0.0 {
            // sliding inside a wall line: only allowed within one door gap
            match (self.in_door(from), self.in_door(to)) {
                (Some(a), Some(b)) if a == b => {}
                _ => return true,
            }
        }
        false
    }

    /// Applies a displacement with per-axis collision rejection, x first.
    pub fn apply_displacement(&self, p: [f64; 2], d: [f64; 2]) -> [f64; 2] {
        let mut q = p;
        let nx = q[0] + d[0];
        if d[0] != 0.0 && !self.axis_blocked(q[0], nx, q[1]) {
            q[0] = nx;
        }
        let ny = q[1] + d[1];
        if d[1] != 0.0 && !self.axis_blocked(q[1], ny, q[0]) {
            q[1] = ny;
        }
        q
    }

    pub fn is_success(&self, s: &[f64], g: &[f64]) -> bool {
        distance(s, g) <= GOAL_TOLERANCE
    }

    pub fn sample_point(&mut self) -> [f64; 2] {
        loop {
            let p = [self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0)];
            if self.is_valid(&p) {
                return p;
            }
        }
    }

    pub fn sample_pair(&mut self) -> ([f64; 2], [f64; 2]) {
        loop {
            let s = self.sample_point();
            let g = self.sample_point();
            if !self.is_success(&s, &g) {
                return (s, g);
            }
        }
    }

    pub fn reset(&mut self, query: Option<&GoalQuery>) -> Result<(StateVec, StateVec)> {
        let (s, g) = match query {
            Some(q) => {
                if !self.is_valid(&q.start) {
                    return Err(Error::InvalidQuery(format!("query {}: start is not a free point", q.id)));
                }
                if !self.is_valid(&q.goal) {
                    return Err(Error::InvalidQuery(format!("query {}: goal is not a free point", q.id)));
                }
                ([q.start[0], q.start[1]], [q.goal[0], q.goal[1]])
            }
            None => self.sample_pair(),
        };
        self.pos = Some(s);
        self.goal = Some(g);
        Ok((s.to_vec(), g.to_vec()))
    }

    pub fn step(&mut self, action: &Action) -> Result<StateVec> {
        let (pos, goal) = match (self.pos, self.goal) {
            (Some(p), Some(g)) => (p, g),
            _ => return Err(Error::NotReset),
        };
        let a = match action {
            Action::Continuous(a) if a.len() == 2 && a.iter().all(|v| v.is_finite()) => [a[0], a[1]],
            Action::Continuous(a) => {
                return Err(Error::InvalidArgument(format!("bad continuous action {a:?}")))
            }
            Action::Discrete(_) => {
                return Err(Error::InvalidArgument("continuous rooms take 2-d actions".into()))
            }
        };
        if self.is_success(&pos, &goal) {
            return Ok(pos.to_vec());
        }
        let clipped = clip_norm(a, MAX_ACTION_NORM);
        let mut d = clipped;
        if self.noise_sigma > 0.0 {
            for v in &mut d {
                let eps: f64 = StandardNormal.sample(&mut self.rng);
                *v += self.noise_sigma * eps;
            }
        }
        let next = self.apply_displacement(pos, d);
        self.pos = Some(next);
        Ok(next.to_vec())
    }

    pub fn position(&self) -> Option<[f64; 2]> {
        self.pos
    }
}

pub fn clip_norm(a: [f64; 2], max: f64) -> [f64; 2] {
    let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
    if n > max {
        [a[0] * max / n, a[1] * max / n]
    } else {
        a
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(start: [f64; 2], goal: [f64; 2]) -> GoalQuery {
        GoalQuery {
            id: 0,
            start: start.to_vec(),
            goal: goal.to_vec(),
        }
    }

    #[test]
    fn action_is_clipped_to_max_norm() {
        let mut env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        env.reset(Some(&query([-0.7, -0.7], [0.7, 0.7]))).unwrap();
        let s = env.step(&Action::Continuous(vec![0.15, 0.2])).unwrap();
        let d = [s[0] + 0.7, s[1] + 0.7];
        assert!((distance(&d, &[0.0, 0.0]) - 0.1).abs() < 1e-12);
        assert!((d[0] / d[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_action_is_identity() {
        let mut env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        env.reset(Some(&query([-0.3, 0.4], [0.7, 0.7]))).unwrap();
        assert_eq!(env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap(), vec![-0.3, 0.4]);
    }

    #[test]
    fn success_boundary() {
        let env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        assert!(env.is_success(&[0.0, 0.5], &[0.2, 0.5]));
        assert!(env.is_success(&[0.0, 0.5], &[0.1999, 0.5]));
        assert!(!env.is_success(&[0.0, 0.5], &[0.2001, 0.5]));
    }

    #[test]
    fn wall_blocks_outside_doors_and_slides() {
        let mut env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        env.reset(Some(&query([-0.05, 0.2], [0.7, 0.7]))).unwrap();
        // x component crosses the wall away from the door, y component survives
        let s = env.step(&Action::Continuous(vec![0.08, 0.06])).unwrap();
        assert_eq!(s[0], -0.05);
        assert!((s[1] - 0.26).abs() < 1e-12);
    }

    #[test]
    fn door_lets_agent_through() {
        let mut env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        env.reset(Some(&query([-0.05, 0.5], [0.7, 0.7]))).unwrap();
        let s = env.step(&Action::Continuous(vec![0.1, 0.0])).unwrap();
        assert!((s[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn boundary_blocks() {
        let mut env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        env.reset(Some(&query([0.95, -0.5], [0.5, 0.7]))).unwrap();
        let s = env.step(&Action::Continuous(vec![0.1, 0.0])).unwrap();
        assert_eq!(s, vec![0.95, -0.5]);
    }

    #[test]
    fn goal_is_absorbing() {
        let mut env = ContinuousRooms::new(0.5, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        env.reset(Some(&query([0.5, 0.5], [0.55, 0.5]))).unwrap();
        for _ in 0..10 {
            assert_eq!(env.step(&Action::Continuous(vec![0.1, 0.1])).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn invalid_queries() {
        let mut env = ContinuousRooms::new(0.0, DEFAULT_DOOR_WIDTH, 50, 0).unwrap();
        assert!(env.reset(Some(&query([0.0, 0.2], [0.5, 0.5]))).is_err());
        assert!(env.reset(Some(&query([1.2, 0.2], [0.5, 0.5]))).is_err());
        assert!(env.reset(Some(&query([0.0, 0.5], [0.5, 0.5]))).is_ok());
        assert!(ContinuousRooms::new(-0.1, DEFAULT_DOOR_WIDTH, 50, 0).is_err());
    }
}
