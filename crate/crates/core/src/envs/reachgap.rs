use serde::{Deserialize, Serialize};

use crate::diffnet::DistOutput;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallContact {
    /// Touching the wall outside the gap ends the episode as a failure.
    #[default]
    Terminal,
    /// The move is cancelled and the agent stays put.
    Block,
}

fn d_wall_x() -> f64 {
    0.5
}
fn d_gap_y() -> f64 {
    0.3
}
fn d_gap_hw() -> f64 {
    0.04
}
fn d_goal() -> [f64; 2] {
    [0.85, 0.8]
}
fn d_radius() -> f64 {
    0.03
}
fn d_step() -> f64 {
    0.05
}
fn d_horizon() -> usize {
    200
}
fn d_start_min() -> [f64; 2] {
    [0.05, 0.5]
}
fn d_start_max() -> [f64; 2] {
    [0.3, 0.9]
}
fn d_step_reward() -> f64 {
    -0.01
}
fn d_goal_reward() -> f64 {
    1.0
}
fn d_crash_reward() -> f64 {
    -1.0
}

/// Unit-square workspace split by a vertical wall at `wall_x` with a single
/// gap; the goal sits on the far side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachGapSpec {
    #[serde(default = "d_wall_x")]
    pub wall_x: f64,
    #[serde(default = "d_gap_y")]
    pub gap_center_y: f64,
    #[serde(default = "d_gap_hw")]
    pub gap_half_width: f64,
    #[serde(default = "d_goal")]
    pub goal: [f64; 2],
    #[serde(default = "d_radius")]
    pub success_radius: f64,
    #[serde(default = "d_step")]
    pub max_step: f64,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_start_min")]
    pub start_min: [f64; 2],
    #[serde(default = "d_start_max")]
    pub start_max: [f64; 2],
    #[serde(default)]
    pub wall_contact: WallContact,
    #[serde(default = "d_step_reward")]
    pub step_reward: f64,
    #[serde(default = "d_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "d_crash_reward")]
    pub crash_reward: f64,
}

impl Default for ReachGapSpec {
    fn default() -> Self {
        Self {
            wall_x: d_wall_x(),
            gap_center_y: d_gap_y(),
            gap_half_width: d_gap_hw(),
            goal: d_goal(),
            success_radius: d_radius(),
            max_step: d_step(),
            horizon: d_horizon(),
            start_min: d_start_min(),
            start_max: d_start_max(),
            wall_contact: WallContact::default(),
            step_reward: d_step_reward(),
            goal_reward: d_goal_reward(),
            crash_reward: d_crash_reward(),
        }
    }
}

impl ReachGapSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.wall_x,
            self.gap_center_y,
            self.gap_half_width,
            self.success_radius,
            self.max_step,
        ]
        .iter()
        .chain(&self.goal)
        .chain(&self.start_min)
        .chain(&self.start_max)
        .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("reachgap parameters must be finite"));
        }
        if self.horizon == 0 || !(self.success_radius > 0.0) || !(self.max_step > 0.0) {
            return Err(invalid("reachgap needs horizon >= 1, success_radius > 0, max_step > 0"));
        }
        if !(self.gap_half_width > 0.0) {
            return Err(invalid("reachgap gap_half_width must be > 0"));
        }
        if !(self.start_max[0] < self.wall_x) || !(self.goal[0] > self.wall_x) {
            return Err(invalid("reachgap starts must lie left of the wall and the goal right of it"));
        }
        for d in 0..2 {
            if self.start_min[d] > self.start_max[d] {
                return Err(invalid("reachgap start_min must not exceed start_max"));
            }
        }
        // the direct line from every start must hit the wall, forcing the gap passage
        for i in 0..=10 {
            for j in 0..=10 {
                let s = self.start_grid_point(i, j, 10);
                if !self.crosses_wall(s, self.goal) {
                    return Err(invalid(format!(
                        "straight line from start {s:?} to the goal passes the gap; move the gap or goal"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn start_grid_point(&self, i: usize, j: usize, n: usize) -> [f64; 2] {
        let f = |k: usize, d: usize| {
            self.start_min[d] + (self.start_max[d] - self.start_min[d]) * k as f64 / n.max(1) as f64
        };
        [f(i, 0), f(j, 1)]
    }

    /// True when the segment `from -> to` touches the wall outside the gap.
    pub fn crosses_wall(&self, from: [f64; 2], to: [f64; 2]) -> bool {
        let x = self.wall_x;
        let outside = |y: f64| (y - self.gap_center_y).abs() > self.gap_half_width;
        let (x0, x1) = (from[0], to[0]);
        if (x0 < x && x1 < x) || (x0 > x && x1 > x) {
            return false;
        }
        if x0 == x1 {
            // moving along the wall line
            return outside(from[1]) || outside(to[1]);
        }
        let s = (x - x0) / (x1 - x0);
        outside(from[1] + s * (to[1] - from[1]))
    }

    pub fn at_goal(&self, p: [f64; 2]) -> bool {
        dist(p, self.goal) <= self.success_radius
    }

    /// Clips a displacement to the per-step norm limit.
    pub fn clip(&self, a: &[f64]) -> ([f64; 2], bool) {
        let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
        if n > self.max_step {
            let k = self.max_step / n;
            ([a[0] * k, a[1] * k], true)
        } else {
            ([a[0], a[1]], false)
        }
    }

    /// Waypoint the scripted expert heads for: the gap centre until the
    /// wall is passed, then the goal.
    pub fn waypoint(&self, p: [f64; 2]) -> [f64; 2] {
        if p[0] < self.wall_x {
            [self.wall_x, self.gap_center_y]
        } else {
            self.goal
        }
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// The scripted expert: a step toward the current waypoint, clipped to the
/// step limit, with isotropic noise of standard deviation `noise_std`.
pub fn scripted_expert(spec: &ReachGapSpec, p: [f64; 2], noise_std: f64) -> DistOutput {
    let w = spec.waypoint(p);
    let (mean, _) = spec.clip(&[w[0] - p[0], w[1] - p[1]]);
    DistOutput::Gaussian {
        mean: mean.to_vec(),
        var: vec![noise_std * noise_std; 2],
    }
}
