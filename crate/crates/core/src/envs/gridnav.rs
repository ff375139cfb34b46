use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const N_GRID_ACTIONS: usize = 5;
pub const GRID_ACTION_KEYS: [&str; N_GRID_ACTIONS] = ["up", "down", "left", "right", "stay"];

pub fn grid_action_from_key(key: &str) -> Option<usize> {
    GRID_ACTION_KEYS.iter().position(|k| *k == key)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Free,
    Wall,
    Hazard,
    Goal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFeatures {
    /// One-hot agent cell.
    #[default]
    Onehot,
    /// Agent (row, col) scaled to [0, 1].
    Coords,
}

pub const DEFAULT_MAP: &str = "\
S..#....
.#.#.HH.
.#...#..
.##H.#.H
...#....
.H.#.##.
...H.#..
.......G";

fn default_map() -> String {
    DEFAULT_MAP.to_string()
}
fn default_horizon() -> usize {
    50
}
fn default_gamma() -> f64 {
    0.95
}
fn default_step() -> f64 {
    -0.01
}
fn default_goal() -> f64 {
    1.0
}
fn default_hazard() -> f64 {
    -1.0
}

/// Serialized form: the map as ASCII art (`#` wall, `G` goal, `H` hazard,
/// `S` start, `.` free), one row per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridNavConfig {
    #[serde(default = "default_map")]
    pub map: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_step")]
    pub step_reward: f64,
    #[serde(default = "default_goal")]
    pub goal_reward: f64,
    #[serde(default = "default_hazard")]
    pub hazard_reward: f64,
    #[serde(default)]
    pub features: GridFeatures,
}

impl Default for GridNavConfig {
    fn default() -> Self {
        Self {
            map: default_map(),
            horizon: default_horizon(),
            gamma: default_gamma(),
            step_reward: default_step(),
            goal_reward: default_goal(),
            hazard_reward: default_hazard(),
            features: GridFeatures::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridNavConfig", into = "GridNavConfig")]
pub struct GridNavSpec {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub goal: usize,
    pub starts: Vec<usize>,
    pub horizon: usize,
    pub gamma: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub hazard_reward: f64,
    pub features: GridFeatures,
}

impl TryFrom<GridNavConfig> for GridNavSpec {
    type Error = Error;

    fn try_from(c: GridNavConfig) -> Result<Self> {
        let rows: Vec<&str> = c
            .map
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(invalid("gridnav map is empty"));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut goal = None;
        let mut starts = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(invalid(format!("gridnav map row {r} has a different width")));
            }
            for (col, ch) in row.chars().enumerate() {
                let idx = r * width + col;
                cells.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Wall,
                    'H' => Cell::Hazard,
                    'S' => {
                        starts.push(idx);
                        Cell::Free
                    }
                    'G' => {
                        if goal.replace(idx).is_some() {
                            return Err(invalid("gridnav map has more than one goal"));
                        }
                        Cell::Goal
                    }
                    other => return Err(invalid(format!("unknown gridnav map symbol {other:?}"))),
                });
            }
        }
        let goal = goal.ok_or_else(|| invalid("gridnav map has no goal"))?;
        if starts.is_empty() {
            return Err(invalid("gridnav map has no start cell"));
        }
        let spec = GridNavSpec {
            width,
            height,
            cells,
            goal,
            starts,
            horizon: c.horizon,
            gamma: c.gamma,
            step_reward: c.step_reward,
            goal_reward: c.goal_reward,
            hazard_reward: c.hazard_reward,
            features: c.features,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<GridNavSpec> for GridNavConfig {
    fn from(s: GridNavSpec) -> Self {
        GridNavConfig {
            map: s.to_ascii(),
            horizon: s.horizon,
            gamma: s.gamma,
            step_reward: s.step_reward,
            goal_reward: s.goal_reward,
            hazard_reward: s.hazard_reward,
            features: s.features,
        }
    }
}

impl Default for GridNavSpec {
    fn default() -> Self {
        GridNavConfig::default().try_into().expect("default map is valid")
    }
}

impl GridNavSpec {
    pub fn from_ascii(map: &str) -> Result<Self> {
        GridNavConfig {
            map: map.to_string(),
            ..Default::default()
        }
        .try_into()
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height {
            if r > 0 {
                out.push('\n');
            }
            for c in 0..self.width {
                let i = r * self.width + c;
                out.push(match self.cells[i] {
                    Cell::Wall => '#',
                    Cell::Hazard => 'H',
                    Cell::Goal => 'G',
                    Cell::Free if self.starts.contains(&i) => 'S',
                    Cell::Free => '.',
                });
            }
        }
        out
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_terminal(&self, cell: usize) -> bool {
        matches!(self.cells[cell], Cell::Goal | Cell::Hazard)
    }

    pub fn rc(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Deterministic transition; moves off the grid or into walls stay put.
    pub fn next_cell(&self, cell: usize, action: usize) -> usize {
        let (r, c) = self.rc(cell);
        let (r2, c2) = match action {
            0 if r > 0 => (r - 1, c),
            1 if r + 1 < self.height => (r + 1, c),
            2 if c > 0 => (r, c - 1),
            3 if c + 1 < self.width => (r, c + 1),
            _ => (r, c),
        };
        let next = r2 * self.width + c2;
        if self.cells[next] == Cell::Wall {
            cell
        } else {
            next
        }
    }

    pub fn reward(&self, next: usize) -> f64 {
        match self.cells[next] {
            Cell::Goal => self.goal_reward,
            Cell::Hazard => self.hazard_reward,
            _ => self.step_reward,
        }
    }

    pub fn raw_dim(&self) -> usize {
        match self.features {
            GridFeatures::Onehot => self.n_cells(),
            GridFeatures::Coords => 2,
        }
    }

    pub fn features(&self, cell: usize) -> Vec<f64> {
        match self.features {
            GridFeatures::Onehot => {
                let mut v = vec![0.0; self.n_cells()];
                v[cell] = 1.0;
                v
            }
            GridFeatures::Coords => {
                let (r, c) = self.rc(cell);
                vec![
                    r as f64 / (self.height.max(2) - 1) as f64,
                    c as f64 / (self.width.max(2) - 1) as f64,
                ]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("gridnav horizon must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gridnav gamma must lie in (0, 1)"));
        }
        // backwards reachability from the goal through non-terminal cells
        let mut reach = vec![false; self.n_cells()];
        reach[self.goal] = true;
        let mut queue = VecDeque::from([self.goal]);
        while let Some(target) = queue.pop_front() {
            for cell in 0..self.n_cells() {
                if reach[cell] || self.cells[cell] != Cell::Free {
                    continue;
                }
                if (0..N_GRID_ACTIONS).any(|a| self.next_cell(cell, a) == target) {
                    reach[cell] = true;
                    queue.push_back(cell);
                }
            }
        }
        if let Some(cell) = (0..self.n_cells()).find(|&c| self.cells[c] == Cell::Free && !reach[c]) {
            return Err(invalid(format!(
                "gridnav goal is unreachable from cell {:?}",
                self.rc(cell)
            )));
        }
        Ok(())
    }
}

/// Optimal action values for a GridNav map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub q: Vec<[f64; N_GRID_ACTIONS]>,
    pub gamma: f64,
    pub sweeps: usize,
}

impl QTable {
    pub fn values(&self, cell: usize) -> &[f64] {
        &self.q[cell]
    }

    pub fn v(&self, cell: usize) -> f64 {
        self.q[cell].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, ties broken toward the lowest action index.
    pub fn greedy(&self, cell: usize) -> usize {
        crate::math::argmax(&self.q[cell])
    }

    fn backup(&self, spec: &GridNavSpec, cell: usize, a: usize) -> f64 {
        let next = spec.next_cell(cell, a);
        let cont = if spec.is_terminal(next) { 0.0 } else { self.v(next) };
        spec.reward(next) + spec.gamma * cont
    }

    /// max |Q - TQ| over non-terminal, non-wall cells.
    pub fn bellman_residual(&self, spec: &GridNavSpec) -> f64 {
        let mut worst: f64 = 0.0;
        for cell in 0..spec.n_cells() {
            if spec.cells[cell] != Cell::Free {
                continue;
            }
            for a in 0..N_GRID_ACTIONS {
                worst = worst.max((self.q[cell][a] - self.backup(spec, cell, a)).abs());
            }
        }
        worst
    }
}

const MAX_SWEEPS: usize = 100_000;

/// Synchronous value iteration on Q until the Bellman residual drops below `tol`.
/// Terminal cells carry value 0; rewards are paid on entry.
pub fn value_iteration(spec: &GridNavSpec, gamma: f64, tol: f64) -> Result<QTable> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma must lie in (0, 1)"));
    }
    let spec = GridNavSpec {
        gamma,
        ..spec.clone()
    };
    let mut table = QTable {
        q: vec![[0.0; N_GRID_ACTIONS]; spec.n_cells()],
        gamma,
        sweeps: 0,
    };
    let mut residual = f64::INFINITY;
    while table.sweeps < MAX_SWEEPS {
        let mut next = table.q.clone();
        residual = 0.0;
        for cell in 0..spec.n_cells() {
            if spec.cells[cell] != Cell::Free {
                continue;
            }
            for a in 0..N_GRID_ACTIONS {
                let b = table.backup(&spec, cell, a);
                residual = f64::max(residual, (b - table.q[cell][a]).abs());
                next[cell][a] = b;
            }
        }
        table.q = next;
        table.sweeps += 1;
        if table.bellman_residual(&spec) < tol {
            return Ok(table);
        }
    }
    Err(Error::NoConvergence {
        sweeps: table.sweeps,
        residual,
    })
}
