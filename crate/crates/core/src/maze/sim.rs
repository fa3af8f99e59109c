//! Point-robot navigation with bumpers and three rangefinders.

use serde::{Deserialize, Serialize};

use super::layout::{Cell, MazeLayout, Segment};
use crate::error::{Error, Result};

const CONTACT_EPS: f64 = 1e-9;
const MIN_SPEED: f64 = 1e-6;

/// Simulator constants. None of these are fixed by the navigation task
/// itself; they are declared defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeParams {
    pub dt: f64,
    pub damping: f64,
    pub force_scale: f64,
    pub radius: f64,
    pub episode_length: usize,
    pub gamma: f64,
    /// Standard deviation of the start-position perturbation.
    pub init_noise: f64,
    /// Rangefinder reach as a fraction of the maze side.
    pub range_fraction: f64,
    pub action_frame: ActionFrame,
}

/// Frame the two action coordinates are expressed in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionFrame {
    /// World `x` and `y` force components.
    #[default]
    World,
    /// Forward and leftward force relative to the current heading, the same
    /// frame the rangefinders and bumpers report in.
    Heading,
}

impl Default for MazeParams {
    fn default() -> Self {
        MazeParams {
            dt: 0.1,
            damping: 0.9,
            force_scale: 1.0,
            radius: 0.1,
            episode_length: 400,
            gamma: 0.99,
            init_noise: 1e-3,
            range_fraction: 0.1,
            action_frame: ActionFrame::World,
        }
    }
}

impl MazeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("maze.sim.dt", self.dt),
            ("maze.sim.force_scale", self.force_scale),
            ("maze.sim.range_fraction", self.range_fraction),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::config("maze.sim.damping", "must lie in [0, 1)"));
        }
        if !(self.radius > 0.0 && self.radius < 0.5) {
            return Err(Error::config("maze.sim.radius", "must lie in (0, 0.5)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("maze.sim.gamma", "must lie in (0, 1]"));
        }
        if !(self.init_noise >= 0.0 && self.init_noise < 0.1) {
            return Err(Error::config("maze.sim.init_noise", "must lie in [0, 0.1)"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("maze.sim.episode_length", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MazeSimState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub step: usize,
}

impl MazeSimState {
    pub fn at(position: [f64; 2]) -> Self {
        MazeSimState {
            position,
            velocity: [0.0, 0.0],
            step: 0,
        }
    }

    /// Unit vector along the velocity, `+x` when (almost) at rest.
    pub fn heading(&self) -> [f64; 2] {
        unit_or_x(self.velocity)
    }
}

fn unit_or_x(v: [f64; 2]) -> [f64; 2] {
    let speed = v[0].hypot(v[1]);
    if speed < MIN_SPEED {
        [1.0, 0.0]
    } else {
        [v[0] / speed, v[1] / speed]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MazeObservation {
    pub bumper_left: bool,
    pub bumper_right: bool,
    pub range_m45: f64,
    pub range_0: f64,
    pub range_p45: f64,
}

impl MazeObservation {
    /// Network input: bumpers as 0/1, ranges divided by `range_max`.
    pub fn to_input(&self, range_max: f64) -> [f64; 5] {
        [
            self.bumper_left as u8 as f64,
            self.bumper_right as u8 as f64,
            self.range_m45 / range_max,
            self.range_0 / range_max,
            self.range_p45 / range_max,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub state: MazeSimState,
    pub observation: MazeObservation,
    pub reward: f64,
    pub done: bool,
}

/// Distance along a ray to an axis-aligned segment, if it is hit.
fn ray_hits(origin: [f64; 2], dir: [f64; 2], s: &Segment) -> Option<f64> {
    if s.a[0] == s.b[0] {
        if dir[0] == 0.0 {
            return None;
        }
        let t = (s.a[0] - origin[0]) / dir[0];
        let y = origin[1] + t * dir[1];
        let (lo, hi) = (s.a[1].min(s.b[1]), s.a[1].max(s.b[1]));
        (t >= 0.0 && y >= lo && y <= hi).then_some(t)
    } else {
        if dir[1] == 0.0 {
            return None;
        }
        let t = (s.a[1] - origin[1]) / dir[1];
        let x = origin[0] + t * dir[0];
        let (lo, hi) = (s.a[0].min(s.b[0]), s.a[0].max(s.b[0]));
        (t >= 0.0 && x >= lo && x <= hi).then_some(t)
    }
}

fn rotate(v: [f64; 2], degrees: f64) -> [f64; 2] {
    let (s, c) = degrees.to_radians().sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// A maze prepared for simulation.
#[derive(Clone, Debug)]
pub struct Maze {
    layout: MazeLayout,
    segments: Vec<Segment>,
    /// Per cell (row-major), the segments close enough to matter for rays
    /// cast and moves started inside it.
    nearby: Vec<Vec<usize>>,
    params: MazeParams,
}

impl Maze {
    pub fn new(layout: MazeLayout, params: MazeParams) -> Result<Self> {
        params.validate()?;
        let segments = layout.wall_segments();
        // A ray reaches at most `range_max`; one axis move spans at most
        // `dt * terminal speed` plus the footprint.
        let reach = params.range_fraction * layout.n() as f64;
        let travel = params.dt * params.dt * params.force_scale / (1.0 - params.damping);
        let margin = reach.max(params.radius + travel) + 1e-6;
        let n = layout.n();
        let mut nearby = vec![Vec::new(); n * n];
        for row in 0..n {
            for col in 0..n {
                let (x0, y0) = (col as f64 - margin, row as f64 - margin);
                let (x1, y1) = (col as f64 + 1.0 + margin, row as f64 + 1.0 + margin);
                nearby[row * n + col] = segments
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| {
                        s.a[0].max(s.b[0]) >= x0
                            && s.a[0].min(s.b[0]) <= x1
                            && s.a[1].max(s.b[1]) >= y0
                            && s.a[1].min(s.b[1]) <= y1
                    })
                    .map(|(i, _)| i)
                    .collect();
            }
        }
        Ok(Maze {
            layout,
            segments,
            nearby,
            params,
        })
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn params(&self) -> &MazeParams {
        &self.params
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn range_max(&self) -> f64 {
        self.params.range_fraction * self.layout.n() as f64
    }

    pub fn cell_center(&self, c: Cell) -> [f64; 2] {
        [c.col as f64 + 0.5, c.row as f64 + 0.5]
    }

    pub fn in_goal(&self, p: [f64; 2]) -> bool {
        let g = self.layout.goal();
        let (x0, y0) = (g.col as f64, g.row as f64);
        p[0] >= x0 && p[0] <= x0 + 1.0 && p[1] >= y0 && p[1] <= y0 + 1.0
    }

    /// Distance to the nearest wall along `dir` from `origin`, clamped to
    /// `range_max`.
    pub fn cast(&self, origin: [f64; 2], dir: [f64; 2]) -> f64 {
        self.nearby_segments(origin)
            .filter_map(|s| ray_hits(origin, dir, s))
            .fold(self.range_max(), f64::min)
    }

    fn nearby_segments(&self, p: [f64; 2]) -> impl Iterator<Item = &Segment> + '_ {
        let n = self.layout.n();
        let cell = |v: f64| (v.max(0.0) as usize).min(n - 1);
        self.nearby[cell(p[1]) * n + cell(p[0])]
            .iter()
            .map(|&i| &self.segments[i])
    }

    /// Rangefinder readings at -45, 0 and +45 degrees from `heading`
    /// (counter-clockwise positive).
    pub fn rangefinders(&self, position: [f64; 2], heading: [f64; 2]) -> [f64; 3] {
        [-45.0, 0.0, 45.0].map(|deg| self.cast(position, rotate(heading, deg)))
    }

    pub fn observe(&self, state: &MazeSimState, bumpers: (bool, bool)) -> MazeObservation {
        let [m45, f, p45] = self.rangefinders(state.position, state.heading());
        MazeObservation {
            bumper_left: bumpers.0,
            bumper_right: bumpers.1,
            range_m45: m45,
            range_0: f,
            range_p45: p45,
        }
    }

    /// Moves along one axis, stopping at the first wall the robot's square
    /// footprint would cross. Returns the reached coordinate and whether a
    /// wall stopped the motion.
    fn sweep_axis(&self, pos: [f64; 2], axis: usize, delta: f64) -> (f64, bool) {
        let r = self.params.radius;
        let other = 1 - axis;
        let (lo, hi) = (pos[other] - r, pos[other] + r);
        let from = pos[axis];
        let mut target = from + delta;
        let mut hit = false;
        if delta == 0.0 {
            return (from, false);
        }
        for s in self.nearby_segments(pos) {
            let (o0, o1) = (s.a[other].min(s.b[other]), s.a[other].max(s.b[other]));
            if !(o1 > lo + CONTACT_EPS && o0 < hi - CONTACT_EPS) {
                continue;
            }
            let (a0, a1) = (s.a[axis].min(s.b[axis]), s.a[axis].max(s.b[axis]));
            if delta > 0.0 {
                if a0 >= from + r - CONTACT_EPS && a0 - r < target {
                    target = a0 - r;
                    hit = true;
                }
            } else if a1 <= from - r + CONTACT_EPS && a1 + r > target {
                target = a1 + r;
                hit = true;
            }
        }
        (target, hit)
    }

    /// Advances the robot by one control step.
    pub fn step(&self, state: &MazeSimState, action: [f64; 2]) -> StepResult {
        let p = &self.params;
        let action = match p.action_frame {
            ActionFrame::World => action,
            ActionFrame::Heading => {
                let h = state.heading();
                [
                    action[0] * h[0] - action[1] * h[1],
                    action[0] * h[1] + action[1] * h[0],
                ]
            }
        };
        let mut velocity = [
            p.damping * state.velocity[0] + p.dt * p.force_scale * action[0],
            p.damping * state.velocity[1] + p.dt * p.force_scale * action[1],
        ];
        let heading = unit_or_x(velocity);
        let mut position = state.position;
        let (mut left, mut right) = (false, false);
        for axis in 0..2 {
            let delta = p.dt * velocity[axis];
            let (reached, hit) = self.sweep_axis(position, axis, delta);
            position[axis] = reached;
            if hit {
                velocity[axis] = 0.0;
                let mut contact = [0.0; 2];
                contact[axis] = delta.signum();
                let cross = heading[0] * contact[1] - heading[1] * contact[0];
                if cross > CONTACT_EPS {
                    left = true;
                } else if cross < -CONTACT_EPS {
                    right = true;
                } else {
                    left = true;
                    right = true;
                }
            }
        }
        let next = MazeSimState {
            position,
            velocity,
            step: state.step + 1,
        };
        let reached = self.in_goal(position);
        StepResult {
            state: next,
            observation: self.observe(&next, (left, right)),
            reward: if reached { 1.0 } else { 0.0 },
            done: reached || next.step >= p.episode_length,
        }
    }
}
