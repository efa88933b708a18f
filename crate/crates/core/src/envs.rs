//! Point-mass reaching tasks that share one state and action space, and
//! random enumerable MDPs for exact verification.
//!
//! All tasks use the same observation layout (see [`observation`]), so a
//! policy trained on one task can be queried on any other.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

/// Action dimension of every point-mass task.
pub const ACTION_DIM: usize = 2;
/// Observation: position, velocity / v_max, goal - position.
pub const OBS_DIM: usize = 6;
/// Velocity gain per unit action and position gain per unit velocity.
pub const CONTROL_GAIN: f64 = 0.1;
pub const SUCCESS_RADIUS: f64 = 0.05;
pub const SUCCESS_BONUS: f64 = 5.0;
/// Distance kept between a blocked point and the wall it hit.
const WALL_MARGIN: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid MDP request: {0}")]
    InvalidMdp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Reach,
    ReachWall,
    /// Goals lie behind the start position.
    PushBack,
    RandomGoalReach,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Reach => "reach",
            TaskKind::ReachWall => "reach-wall",
            TaskKind::PushBack => "push-back",
            TaskKind::RandomGoalReach => "random-goal-reach",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "reach" => Some(TaskKind::Reach),
            "reach-wall" => Some(TaskKind::ReachWall),
            "push-back" => Some(TaskKind::PushBack),
            "random-goal-reach" => Some(TaskKind::RandomGoalReach),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalSampler {
    Point([f64; 2]),
    UniformBox { low: [f64; 2], high: [f64; 2] },
}

impl GoalSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match *self {
            GoalSampler::Point(p) => p,
            GoalSampler::UniformBox { low, high } => [
                low[0] + (high[0] - low[0]) * rng.gen::<f64>(),
                low[1] + (high[1] - low[1]) * rng.gen::<f64>(),
            ],
        }
    }

    pub fn mean(&self) -> [f64; 2] {
        match *self {
            GoalSampler::Point(p) => p,
            GoalSampler::UniformBox { low, high } => {
                [(low[0] + high[0]) / 2.0, (low[1] + high[1]) / 2.0]
            }
        }
    }
}

/// Line-segment obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Wall {
    /// Fraction `t` along `from -> to` where the move first touches the wall.
    pub fn crossing(&self, from: [f64; 2], to: [f64; 2]) -> Option<f64> {
        let d = [to[0] - from[0], to[1] - from[1]];
        let e = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let denom = cross(d, e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = [self.a[0] - from[0], self.a[1] - from[1]];
        let t = cross(w, e) / denom;
        let s = cross(w, d) / denom;
        ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s)).then_some(t)
    }

    /// Sign of the side of the wall's supporting line that `p` lies on.
    pub fn side(&self, p: [f64; 2]) -> f64 {
        let e = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        cross(e, [p[0] - self.a[0], p[1] - self.a[1]]).signum()
    }
}

fn cross(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub start: [f64; 2],
    pub wall: Option<Wall>,
    pub goal_sampler: GoalSampler,
    pub horizon: usize,
    pub v_max: f64,
    pub seed: u64,
}

const FRONT_GOALS: GoalSampler = GoalSampler::UniformBox {
    low: [-0.6, 0.2],
    high: [0.6, 0.7],
};

impl TaskSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.horizon == 0 {
            return Err(EnvError::InvalidTask("horizon must be positive".into()));
        }
        if self.wall.is_some() != (self.kind == TaskKind::ReachWall) {
            return Err(EnvError::InvalidTask(
                "a wall is present exactly for reach-wall tasks".into(),
            ));
        }
        if !(self.v_max > 0.0) {
            return Err(EnvError::InvalidTask("v_max must be positive".into()));
        }
        Ok(())
    }

    /// Default layout for a task kind.
    pub fn preset(kind: TaskKind, horizon: usize, seed: u64) -> Self {
        let (start, wall, goal_sampler) = match kind {
            TaskKind::Reach => ([0.0, -0.6], None, FRONT_GOALS),
            TaskKind::ReachWall => (
                [0.0, -0.6],
                Some(Wall {
                    a: [-0.3, -0.1],
                    b: [0.3, -0.1],
                }),
                FRONT_GOALS,
            ),
            TaskKind::PushBack => (
                [0.0, 0.4],
                None,
                GoalSampler::UniformBox {
                    low: [-0.6, -0.7],
                    high: [0.6, -0.2],
                },
            ),
            TaskKind::RandomGoalReach => (
                [0.0, 0.0],
                None,
                GoalSampler::UniformBox {
                    low: [-0.8, -0.8],
                    high: [0.8, 0.8],
                },
            ),
        };
        Self {
            kind,
            start,
            wall,
            goal_sampler,
            horizon,
            v_max: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub goal: [f64; 2],
    pub step_index: usize,
}

impl PointMassState {
    pub fn distance_to_goal(&self) -> f64 {
        let dx = self.position[0] - self.goal[0];
        let dy = self.position[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: PointMassState,
    pub reward: f64,
    /// Horizon reached.
    pub done: bool,
    /// Goal within [`SUCCESS_RADIUS`] after this step.
    pub success: bool,
}

pub fn reset<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> PointMassState {
    PointMassState {
        position: spec.start,
        velocity: [0.0, 0.0],
        goal: spec.goal_sampler.sample(rng),
        step_index: 0,
    }
}

/// Advances the point mass by one step. Actions are clipped to `[-1, 1]`.
pub fn step(state: &PointMassState, action: &[f64], spec: &TaskSpec) -> StepOutcome {
    let mut velocity = state.velocity;
    for i in 0..2 {
        let a = action.get(i).copied().unwrap_or(0.0);
        let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
        velocity[i] = (velocity[i] + CONTROL_GAIN * a).clamp(-spec.v_max, spec.v_max);
    }
    let from = state.position;
    let mut position = [
        (from[0] + CONTROL_GAIN * velocity[0]).clamp(-1.0, 1.0),
        (from[1] + CONTROL_GAIN * velocity[1]).clamp(-1.0, 1.0),
    ];
    if let Some(wall) = &spec.wall {
        if let Some(t) = wall.crossing(from, position) {
            let d = [position[0] - from[0], position[1] - from[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let back = (t - WALL_MARGIN / len).max(0.0);
            position = [from[0] + back * d[0], from[1] + back * d[1]];
            velocity = [0.0, 0.0];
        }
    }
    let next = PointMassState {
        position,
        velocity,
        goal: state.goal,
        step_index: (state.step_index + 1).min(spec.horizon),
    };
    let dist = next.distance_to_goal();
    let success = dist < SUCCESS_RADIUS;
    let reward = -dist + if success { SUCCESS_BONUS } else { 0.0 };
    StepOutcome {
        next,
        reward,
        done: next.step_index >= spec.horizon,
        success,
    }
}

/// Policy input for a state; identical layout for every task.
pub fn observation(state: &PointMassState, spec: &TaskSpec) -> [f64; OBS_DIM] {
    [
        state.position[0],
        state.position[1],
        state.velocity[0] / spec.v_max,
        state.velocity[1] / spec.v_max,
        state.goal[0] - state.position[0],
        state.goal[1] - state.position[1],
    ]
}

/// Finite MDP with explicit reward and transition tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `reward[s * n_actions + a]`.
    pub reward: Vec<f64>,
    /// `transition[(s * n_actions + a) * n_states + s']`.
    pub transition: Vec<f64>,
    pub gamma: f64,
    pub initial_state: usize,
    /// Largest absolute reward.
    pub r_max: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        reward: Vec<f64>,
        transition: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, EnvError> {
        if n_states == 0 || n_actions == 0 {
            return Err(EnvError::InvalidMdp("empty state or action set".into()));
        }
        if reward.len() != n_states * n_actions
            || transition.len() != n_states * n_actions * n_states
        {
            return Err(EnvError::InvalidMdp("tensor sizes do not match".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EnvError::InvalidMdp(format!("gamma {gamma} not in (0, 1)")));
        }
        let r_max = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        let mdp = Self {
            n_states,
            n_actions,
            reward,
            transition,
            gamma,
            initial_state: 0,
            r_max,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = mdp.next_state_probs(s, a);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                    return Err(EnvError::InvalidMdp(format!(
                        "transition row ({s}, {a}) is not a distribution"
                    )));
                }
            }
        }
        Ok(mdp)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn next_state_probs(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transition[off..off + self.n_states]
    }
}

/// Random MDP: rewards uniform in `[-1, 1]`, transition rows Dirichlet(1).
pub fn make_chain_mdp<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<TabularMdp, EnvError> {
    if n_states < 2 || n_actions < 2 {
        return Err(EnvError::InvalidMdp(format!(
            "need at least 2 states and 2 actions, got {n_states} x {n_actions}"
        )));
    }
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let draws: Vec<f64> = (0..n_states).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        transition.extend(draws.iter().map(|d| d / total));
    }
    TabularMdp::new(n_states, n_actions, reward, transition, gamma)
}
