//! Discrete grid worlds: multi-room layouts and the double spiral.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, GoalQuery, StateVec};
use crate::error::{Error, Result};
use crate::replay::Trajectory;

/// Move order used for actions and for BFS expansion.
pub const MOVES: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
pub const N_MOVES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    doors: Vec<bool>,
    pub seed: u64,
}

impl GridLayout {
    fn empty(width: usize, height: usize, seed: u64) -> Self {
        GridLayout {
            width,
            height,
            walls: vec![false; width * height],
            doors: vec![false; width * height],
            seed,
        }
    }

    /// `rooms_x x rooms_y` rooms of `room_size x room_size` free cells,
    /// separated by one-cell walls. Each shared wall segment gets one door at
    /// a uniformly random interior position.
    pub fn rooms(rooms_x: usize, rooms_y: usize, room_size: usize, seed: u64) -> Result<Self> {
        if rooms_x == 0 || rooms_y == 0 {
            return Err(Error::InvalidArgument("need at least one room per axis".into()));
        }
        if room_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "room_size must be at least 2, got {room_size}"
            )));
        }
        let pitch = room_size + 1;
        let width = rooms_x * pitch + 1;
        let height = rooms_y * pitch + 1;
        let mut layout = GridLayout::empty(width, height, seed);
        for y in 0..height {
            for x in 0..width {
                if x % pitch == 0 || y % pitch == 0 {
                    layout.walls[y * width + x] = true;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ry in 0..rooms_y {
            for rx in 0..rooms_x.saturating_sub(1) {
                let x = (rx + 1) * pitch;
                let y = ry * pitch + 1 + rng.random_range(0..room_size);
                layout.open_door(x, y);
            }
        }
        for ry in 0..rooms_y.saturating_sub(1) {
            for rx in 0..rooms_x {
                let y = (ry + 1) * pitch;
                let x = rx * pitch + 1 + rng.random_range(0..room_size);
                layout.open_door(x, y);
            }
        }
        layout.check_connected()?;
        Ok(layout)
    }

    /// Two intertwined one-cell corridors spiralling into the center, joined
    /// by a single U-turn connector on the right-hand side.
    ///
    /// `turns` is the side length of the coarse spiral; the map is
    /// `4 * turns + 1 + 2 * margin` cells wide.
    pub fn double_spiral(turns: usize, margin: usize, seed: u64) -> Result<Self> {
        if turns < 2 {
            return Err(Error::InvalidArgument("double spiral needs turns >= 2".into()));
        }
        let m = turns;
        // coarse spiral over an m x m lattice, from the top-right corner
        let coarse = spiral_order(m);
        let n = 2 * m;
        let node_id = |x: usize, y: usize| y * n + x;
        let mut edges = std::collections::BTreeSet::new();
        let toggle = |a: usize, b: usize, on: bool, edges: &mut std::collections::BTreeSet<(usize, usize)>| {
            let key = (a.min(b), a.max(b));
            if on {
                edges.insert(key);
            } else {
                edges.remove(&key);
            }
        };
        for &(bx, by) in &coarse {
            let (x, y) = (2 * bx, 2 * by);
            toggle(node_id(x, y), node_id(x + 1, y), true, &mut edges);
            toggle(node_id(x, y + 1), node_id(x + 1, y + 1), true, &mut edges);
            toggle(node_id(x, y), node_id(x, y + 1), true, &mut edges);
            toggle(node_id(x + 1, y), node_id(x + 1, y + 1), true, &mut edges);
        }
        for pair in coarse.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (left, right) = if a.0 < b.0 || a.1 < b.1 { (a, b) } else { (b, a) };
            let (lx, ly) = (2 * left.0, 2 * left.1);
            let (rx, ry) = (2 * right.0, 2 * right.1);
            if left.1 == right.1 {
                // horizontal neighbours: drop facing sides, bridge top and bottom rows
                toggle(node_id(lx + 1, ly), node_id(lx + 1, ly + 1), false, &mut edges);
                toggle(node_id(rx, ry), node_id(rx, ry + 1), false, &mut edges);
                toggle(node_id(lx + 1, ly), node_id(rx, ry), true, &mut edges);
                toggle(node_id(lx + 1, ly + 1), node_id(rx, ry + 1), true, &mut edges);
            } else {
                toggle(node_id(lx, ly + 1), node_id(lx + 1, ly + 1), false, &mut edges);
                toggle(node_id(rx, ry), node_id(rx + 1, ry), false, &mut edges);
                toggle(node_id(lx, ly + 1), node_id(rx, ry), true, &mut edges);
                toggle(node_id(lx + 1, ly + 1), node_id(rx + 1, ry), true, &mut edges);
            }
        }
        // cut the cycle at the innermost block: the side opposite its parent
        let (cx, cy) = coarse[coarse.len() - 1];
        let (px, py) = coarse[coarse.len() - 2];
        let (x, y) = (2 * cx, 2 * cy);
        let far = if px < cx {
            (node_id(x + 1, y), node_id(x + 1, y + 1))
        } else if px > cx {
            (node_id(x, y), node_id(x, y + 1))
        } else if py < cy {
            (node_id(x, y + 1), node_id(x + 1, y + 1))
        } else {
            (node_id(x, y), node_id(x + 1, y))
        };
        toggle(far.0, far.1, false, &mut edges);

        let side = 2 * n + 1 + 2 * margin;
        let mut layout = GridLayout::empty(side, side, seed);
        layout.walls.iter_mut().for_each(|w| *w = true);
        let cell = |id: usize| (2 * (id % n) + 1 + margin, 2 * (id / n) + 1 + margin);
        for id in 0..n * n {
            let (x, y) = cell(id);
            layout.walls[y * side + x] = false;
        }
        for &(a, b) in &edges {
            let (ax, ay) = cell(a);
            let (bx, by) = cell(b);
            layout.walls[((ay + by) / 2) * side + (ax + bx) / 2] = false;
        }
        layout.check_connected()?;
        Ok(layout)
    }

    fn open_door(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.walls[i] = false;
        self.doors[i] = true;
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_free(&self, cell: usize) -> bool {
        cell < self.walls.len() && !self.walls[cell]
    }

    pub fn is_door(&self, cell: usize) -> bool {
        cell < self.doors.len() && self.doors[cell]
    }

    pub fn door_count(&self) -> usize {
        self.doors.iter().filter(|d| **d).count()
    }

    pub fn free_cells(&self) -> Vec<usize> {
        (0..self.n_cells()).filter(|c| !self.walls[*c]).collect()
    }

    pub fn xy(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    /// Cell reached by `action`; blocked moves stay in place.
    pub fn neighbor(&self, cell: usize, action: usize) -> usize {
        let (x, y) = self.xy(cell);
        let (dx, dy) = MOVES[action];
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            return cell;
        }
        let next = ny as usize * self.width + nx as usize;
        if self.walls[next] {
            cell
        } else {
            next
        }
    }

    /// BFS distances from `from` (`usize::MAX` = unreachable or wall).
    pub fn distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_cells()];
        if !self.is_free(from) {
            return dist;
        }
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            for a in 0..N_MOVES {
                let nb = self.neighbor(c, a);
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[c] + 1;
                    queue.push_back(nb);
                }
            }
        }
        dist
    }

    pub fn check_connected(&self) -> Result<()> {
        let free = self.free_cells();
        let Some(&first) = free.first() else {
            return Err(Error::InvalidArgument("layout has no free cells".into()));
        };
        let dist = self.distances(first);
        if free.iter().any(|c| dist[*c] == usize::MAX) {
            return Err(Error::InvalidArgument("layout is not connected".into()));
        }
        Ok(())
    }

    /// `#` wall, `.` free, `D` door; one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                s.push(if self.doors[i] {
                    'D'
                } else if self.walls[i] {
                    '#'
                } else {
                    '.'
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
        if width == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "empty layout".into(),
            });
        }
        let mut layout = GridLayout::empty(width, height, 0);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Parse {
                    line: y + 1,
                    message: format!("row has {} cells, expected {width}", row.chars().count()),
                });
            }
            for (x, ch) in row.chars().enumerate() {
                let i = y * width + x;
                match ch {
                    '#' => layout.walls[i] = true,
                    '.' => {}
                    'D' => layout.doors[i] = true,
                    other => {
                        return Err(Error::Parse {
                            line: y + 1,
                            message: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
        }
        layout.check_connected()?;
        Ok(layout)
    }
}

/// Coarse spiral over an `m x m` lattice starting top-right, heading left,
/// then winding counter-clockwise inwards.
fn spiral_order(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m * m);
    let (mut left, mut right, mut top, mut bottom) = (0isize, m as isize - 1, 0isize, m as isize - 1);
    while left <= right && top <= bottom {
        for x in (left..=right).rev() {
            out.push((x as usize, top as usize));
        }
        top += 1;
        if top > bottom {
            break;
        }
        for y in top..=bottom {
            out.push((left as usize, y as usize));
        }
        left += 1;
        if left > right {
            break;
        }
        for x in left..=right {
            out.push((x as usize, bottom as usize));
        }
        bottom -= 1;
        if top > bottom {
            break;
        }
        for y in (top..=bottom).rev() {
            out.push((right as usize, y as usize));
        }
        right -= 1;
    }
    out
}

/// Deterministic grid dynamics over a [`GridLayout`].
#[derive(Debug, Clone)]
pub struct GridWorld {
    layout: GridLayout,
    free: Vec<usize>,
    horizon: usize,
    rng: ChaCha8Rng,
    pos: Option<usize>,
    goal: Option<usize>,
}

impl GridWorld {
    pub fn new(layout: GridLayout, horizon: usize, seed: u64) -> Self {
        let free = layout.free_cells();
        GridWorld {
            layout,
            free,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: None,
            goal: None,
        }
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn observe(&self, cell: usize) -> StateVec {
        let (x, y) = self.layout.xy(cell);
        vec![
            normalize(x, self.layout.width),
            normalize(y, self.layout.height),
        ]
    }

    /// Inverse of [`GridWorld::observe`]; `None` for off-grid or wall states.
    pub fn cell_of(&self, s: &[f64]) -> Option<usize> {
        if s.len() != 2 {
            return None;
        }
        let x = denormalize(s[0], self.layout.width)?;
        let y = denormalize(s[1], self.layout.height)?;
        let cell = y * self.layout.width + x;
        self.layout.is_free(cell).then_some(cell)
    }

    pub fn free_cells(&self) -> &[usize] {
        &self.free
    }

    pub fn sample_pair(&mut self) -> (usize, usize) {
        assert!(self.free.len() >= 2, "need two free cells to sample a query");
        loop {
            let s = self.free[self.rng.random_range(0..self.free.len())];
            let g = self.free[self.rng.random_range(0..self.free.len())];
            if s != g {
                return (s, g);
            }
        }
    }

    pub fn reset(&mut self, query: Option<&GoalQuery>) -> Result<(StateVec, StateVec)> {
        let (s, g) = match query {
            Some(q) => {
                let s = self
                    .cell_of(&q.start)
                    .ok_or_else(|| Error::InvalidQuery(format!("query {}: start is not a free cell", q.id)))?;
                let g = self
                    .cell_of(&q.goal)
                    .ok_or_else(|| Error::InvalidQuery(format!("query {}: goal is not a free cell", q.id)))?;
                (s, g)
            }
            None => self.sample_pair(),
        };
        self.pos = Some(s);
        self.goal = Some(g);
        Ok((self.observe(s), self.observe(g)))
    }

    pub fn step(&mut self, action: &Action) -> Result<StateVec> {
        let (pos, goal) = match (self.pos, self.goal) {
            (Some(p), Some(g)) => (p, g),
            _ => return Err(Error::NotReset),
        };
        let a = match action {
            Action::Discrete(a) if *a < N_MOVES => *a,
            Action::Discrete(a) => {
                return Err(Error::ActionOutOfRange {
                    action: *a,
                    n_actions: N_MOVES,
                })
            }
            Action::Continuous(_) => {
                return Err(Error::InvalidArgument("grid worlds take discrete actions".into()))
            }
        };
        if pos != goal {
            self.pos = Some(self.layout.neighbor(pos, a));
        }
        Ok(self.observe(self.pos.unwrap()))
    }

    pub fn position(&self) -> Option<usize> {
        self.pos
    }

    /// BFS shortest path with moves expanded in up, down, left, right order.
    pub fn shortest_path(&self, start: &[f64], goal: &[f64]) -> Result<Trajectory> {
        let s = self
            .cell_of(start)
            .ok_or_else(|| Error::InvalidQuery("start is not a free cell".into()))?;
        let g = self
            .cell_of(goal)
            .ok_or_else(|| Error::InvalidQuery("goal is not a free cell".into()))?;
        let cells = self.shortest_path_cells(s, g)?;
        let mut states = Vec::with_capacity(cells.len());
        let mut actions = Vec::with_capacity(cells.len().saturating_sub(1));
        for w in cells.windows(2) {
            let a = (0..N_MOVES)
                .find(|a| self.layout.neighbor(w[0], *a) == w[1])
                .expect("consecutive path cells are adjacent");
            actions.push(Action::Discrete(a));
        }
        for c in cells {
            states.push(self.observe(c));
        }
        Ok(Trajectory::new(states, actions))
    }

    pub fn shortest_path_cells(&self, s: usize, g: usize) -> Result<Vec<usize>> {
        let n = self.layout.n_cells();
        let mut parent = vec![usize::MAX; n];
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(c) = queue.pop_front() {
            if c == g {
                break;
            }
            for a in 0..N_MOVES {
                let nb = self.layout.neighbor(c, a);
                if parent[nb] == usize::MAX {
                    parent[nb] = c;
                    queue.push_back(nb);
                }
            }
        }
        if parent[g] == usize::MAX {
            return Err(Error::Unreachable);
        }
        let mut path = vec![g];
        let mut c = g;
        while c != s {
            c = parent[c];
            path.push(c);
        }
        path.reverse();
        Ok(path)
    }
}

fn normalize(i: usize, extent: usize) -> f64 {
    if extent <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (extent - 1) as f64 - 1.0
    }
}

fn denormalize(v: f64, extent: usize) -> Option<usize> {
    if !v.is_finite() || extent == 0 {
        return None;
    }
    if extent == 1 {
        return (v == 0.0).then_some(0);
    }
    let raw = (v + 1.0) * (extent - 1) as f64 / 2.0;
    let i = raw.round();
    if i < 0.0 || i > (extent - 1) as f64 || (raw - i).abs() > 1e-6 {
        return None;
    }
    Some(i as usize)
}
