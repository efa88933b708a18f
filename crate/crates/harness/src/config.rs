//! Flat `key = value` experiment configuration with dotted keys.
//!
//! Every key has a documented default (the `full` profile). The `desk`
//! profile shrinks the run to one CPU core. A file may set `profile` and any
//! keys; `--override key=value` is applied last.

use crate::HarnessError;
use cup_core::cup::CupConfig;
use cup_core::envs::{TaskKind, TaskSpec, Wall, ACTION_DIM, OBS_DIM};
use cup_core::sac::SacConfig;
use cup_core::tensor::Activation;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Checkpoint(PathBuf),
    /// Untrained network drawn from this seed.
    Random(u64),
}

impl SourceSpec {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let s = s.trim();
        if let Some(seed) = s.strip_prefix("random:") {
            return seed
                .parse()
                .map(SourceSpec::Random)
                .map_err(|_| HarnessError::Config(format!("bad random source seed '{seed}'")));
        }
        if s.is_empty() {
            return Err(HarnessError::Config("empty source entry".into()));
        }
        Ok(SourceSpec::Checkpoint(PathBuf::from(s)))
    }

    fn render(&self) -> String {
        match self {
            SourceSpec::Checkpoint(p) => p.display().to_string(),
            SourceSpec::Random(s) => format!("random:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: String,
    pub task: TaskKind,
    pub horizon: usize,
    pub v_max: f64,
    /// Replaces the preset wall `[ax, ay, bx, by]`.
    pub wall: Option<[f64; 4]>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub gamma: f64,
    pub tau: f64,
    pub initial_alpha: f64,
    /// `None` means `-action_dim`.
    pub target_entropy: Option<f64>,
    pub reward_scale: f64,
    pub exploration_steps: u64,
    pub env_steps_per_train_step: u64,
    pub replay_capacity: usize,
    pub total_env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub success_threshold: f64,
    /// End the run at the first evaluation reaching the threshold.
    pub stop_at_threshold: bool,
    pub cup: CupConfig,
    pub sources: Vec<SourceSpec>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

pub const KEYS: &[&str] = &[
    "profile",
    "task",
    "task.horizon",
    "task.v_max",
    "task.wall",
    "agent.hidden",
    "agent.activation",
    "agent.batch_size",
    "agent.actor_lr",
    "agent.critic_lr",
    "agent.alpha_lr",
    "agent.adam_beta1",
    "agent.adam_beta2",
    "agent.gamma",
    "agent.tau",
    "agent.initial_alpha",
    "agent.target_entropy",
    "agent.reward_scale",
    "train.exploration_steps",
    "train.env_steps_per_train_step",
    "train.replay_capacity",
    "train.total_env_steps",
    "train.eval_every",
    "train.eval_episodes",
    "train.success_threshold",
    "train.stop_at_threshold",
    "cup.beta1",
    "cup.beta2",
    "cup.n_advantage_samples",
    "cup.regularization_start_step",
    "cup.advantage_uses_max",
    "sources",
    "seeds",
    "output_dir",
];

impl ExperimentConfig {
    /// Full-size settings.
    pub fn full() -> Self {
        Self {
            profile: "full".into(),
            task: TaskKind::Reach,
            horizon: 500,
            v_max: 1.0,
            wall: None,
            hidden: vec![400, 400, 400],
            activation: Activation::Relu,
            batch_size: 1280,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            gamma: 0.99,
            tau: 0.005,
            initial_alpha: 1.0,
            target_entropy: None,
            reward_scale: 1.0,
            exploration_steps: 50_000,
            env_steps_per_train_step: 10,
            replay_capacity: 1_000_000,
            total_env_steps: 2_000_000,
            eval_every: 10_000,
            eval_episodes: 20,
            success_threshold: 0.9,
            stop_at_threshold: false,
            cup: CupConfig {
                regularization_start_step: 500_000,
                ..CupConfig::default()
            },
            sources: Vec::new(),
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
        }
    }

    /// One-core settings used by the acceptance suite.
    pub fn desk() -> Self {
        Self {
            profile: "desk".into(),
            horizon: 200,
            hidden: vec![64, 64],
            batch_size: 128,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            alpha_lr: 1e-3,
            exploration_steps: 5_000,
            replay_capacity: 100_000,
            total_env_steps: 200_000,
            eval_every: 5_000,
            cup: CupConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            ..Self::full()
        }
    }

    pub fn profile(name: &str) -> Result<Self, HarnessError> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(HarnessError::Config(format!("unknown profile '{other}'"))),
        }
    }

    /// Reads a config file. `profile` is applied first wherever it appears.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let pairs = parse_pairs(text)?;
        let base = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "profile")
            .map_or("desk", |(_, v)| v.as_str());
        let mut cfg = Self::profile(base)?;
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies `key=value`.
    pub fn apply_override(&mut self, item: &str) -> Result<(), HarnessError> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override '{item}' is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "profile" {
            return Err(HarnessError::Config("profile can only be set in the config file".into()));
        }
        self.set(k, v)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let bad = |what: &str| HarnessError::Config(format!("{key}: cannot parse '{value}' as {what}"));
        let float = || value.parse::<f64>().map_err(|_| bad("a number"));
        let int = || parse_count(value).ok_or_else(|| bad("a non-negative integer"));
        let boolean = || value.parse::<bool>().map_err(|_| bad("true/false"));
        match key {
            "task" => {
                self.task = TaskKind::parse(value).ok_or_else(|| bad("a task name"))?;
            }
            "task.horizon" => self.horizon = int()? as usize,
            "task.v_max" => self.v_max = float()?,
            "task.wall" => {
                self.wall = if value == "preset" {
                    None
                } else {
                    let v: Vec<f64> = value
                        .split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|_| bad("ax,ay,bx,by")))
                        .collect::<Result<_, _>>()?;
                    Some(v.try_into().map_err(|_| bad("ax,ay,bx,by"))?)
                }
            }
            "agent.hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|w| w.trim().parse::<usize>().map_err(|_| bad("a width list")))
                    .collect::<Result<_, _>>()?;
            }
            "agent.activation" => {
                self.activation = match value {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    _ => return Err(bad("relu or tanh")),
                }
            }
            "agent.batch_size" => self.batch_size = int()? as usize,
            "agent.actor_lr" => self.actor_lr = float()?,
            "agent.critic_lr" => self.critic_lr = float()?,
            "agent.alpha_lr" => self.alpha_lr = float()?,
            "agent.adam_beta1" => self.adam_beta1 = float()?,
            "agent.adam_beta2" => self.adam_beta2 = float()?,
            "agent.gamma" => self.gamma = float()?,
            "agent.tau" => self.tau = float()?,
            "agent.initial_alpha" => self.initial_alpha = float()?,
            "agent.target_entropy" => {
                self.target_entropy = if value == "auto" { None } else { Some(float()?) }
            }
            "agent.reward_scale" => self.reward_scale = float()?,
            "train.exploration_steps" => self.exploration_steps = int()?,
            "train.env_steps_per_train_step" => self.env_steps_per_train_step = int()?,
            "train.replay_capacity" => self.replay_capacity = int()? as usize,
            "train.total_env_steps" => self.total_env_steps = int()?,
            "train.eval_every" => self.eval_every = int()?,
            "train.eval_episodes" => self.eval_episodes = int()? as usize,
            "train.success_threshold" => self.success_threshold = float()?,
            "train.stop_at_threshold" => self.stop_at_threshold = boolean()?,
            "cup.beta1" => self.cup.beta1 = float()?,
            "cup.beta2" => self.cup.beta2 = float()?,
            "cup.n_advantage_samples" => self.cup.n_advantage_samples = int()? as usize,
            "cup.regularization_start_step" => self.cup.regularization_start_step = int()?,
            "cup.advantage_uses_max" => self.cup.advantage_uses_max_of_target_critics = boolean()?,
            "sources" => {
                self.sources = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(SourceSpec::parse)
                    .collect::<Result<_, _>>()?;
            }
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse_count(s.trim()).ok_or_else(|| bad("a seed list")))
                    .collect::<Result<_, _>>()?;
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "profile" => {
                return Err(HarnessError::Config("profile must be set before other keys".into()))
            }
            _ => return Err(HarnessError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return fail("seeds must not be empty");
        }
        if self.total_env_steps == 0 {
            return fail("train.total_env_steps must be positive");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return fail("evaluation interval and episode count must be positive");
        }
        if self.env_steps_per_train_step == 0 {
            return fail("train.env_steps_per_train_step must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return fail("replay capacity must hold at least one batch");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("agent.hidden needs positive widths");
        }
        if !(self.cup.beta1 > 0.0 && self.cup.beta2 > 0.0) || self.cup.n_advantage_samples == 0 {
            return fail("cup weights and sample count must be positive");
        }
        if !(0.0..=1.0).contains(&self.success_threshold) {
            return fail("train.success_threshold must be in [0, 1]");
        }
        self.task_spec(0)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sac_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn task_spec(&self, seed: u64) -> TaskSpec {
        let mut spec = TaskSpec::preset(self.task, self.horizon, seed);
        spec.v_max = self.v_max;
        if let Some([ax, ay, bx, by]) = self.wall {
            spec.wall = Some(Wall {
                a: [ax, ay],
                b: [bx, by],
            });
        }
        spec
    }

    pub fn sac_config(&self) -> SacConfig {
        SacConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            alpha_lr: self.alpha_lr,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            gamma: self.gamma,
            tau: self.tau,
            initial_alpha: self.initial_alpha,
            target_entropy: self.target_entropy,
            ..SacConfig::new(OBS_DIM, ACTION_DIM)
        }
    }

    /// Config text that reproduces `self` when read back.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "profile = {}", self.profile);
        let _ = writeln!(s, "task = {}", self.task.name());
        let _ = writeln!(s, "task.horizon = {}", self.horizon);
        let _ = writeln!(s, "task.v_max = {}", self.v_max);
        let _ = writeln!(
            s,
            "task.wall = {}",
            self.wall.map_or("preset".to_string(), |w| {
                w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            })
        );
        let _ = writeln!(s, "agent.hidden = {}", list(&self.hidden));
        let _ = writeln!(
            s,
            "agent.activation = {}",
            if self.activation == Activation::Tanh { "tanh" } else { "relu" }
        );
        let _ = writeln!(s, "agent.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "agent.actor_lr = {}", self.actor_lr);
        let _ = writeln!(s, "agent.critic_lr = {}", self.critic_lr);
        let _ = writeln!(s, "agent.alpha_lr = {}", self.alpha_lr);
        let _ = writeln!(s, "agent.adam_beta1 = {}", self.adam_beta1);
        let _ = writeln!(s, "agent.adam_beta2 = {}", self.adam_beta2);
        let _ = writeln!(s, "agent.gamma = {}", self.gamma);
        let _ = writeln!(s, "agent.tau = {}", self.tau);
        let _ = writeln!(s, "agent.initial_alpha = {}", self.initial_alpha);
        let _ = writeln!(
            s,
            "agent.target_entropy = {}",
            self.target_entropy.map_or("auto".to_string(), |h| h.to_string())
        );
        let _ = writeln!(s, "agent.reward_scale = {}", self.reward_scale);
        let _ = writeln!(s, "train.exploration_steps = {}", self.exploration_steps);
        let _ = writeln!(s, "train.env_steps_per_train_step = {}", self.env_steps_per_train_step);
        let _ = writeln!(s, "train.replay_capacity = {}", self.replay_capacity);
        let _ = writeln!(s, "train.total_env_steps = {}", self.total_env_steps);
        let _ = writeln!(s, "train.eval_every = {}", self.eval_every);
        let _ = writeln!(s, "train.eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "train.success_threshold = {}", self.success_threshold);
        let _ = writeln!(s, "train.stop_at_threshold = {}", self.stop_at_threshold);
        let _ = writeln!(s, "cup.beta1 = {}", self.cup.beta1);
        let _ = writeln!(s, "cup.beta2 = {}", self.cup.beta2);
        let _ = writeln!(s, "cup.n_advantage_samples = {}", self.cup.n_advantage_samples);
        let _ = writeln!(s, "cup.regularization_start_step = {}", self.cup.regularization_start_step);
        let _ = writeln!(s, "cup.advantage_uses_max = {}", self.cup.advantage_uses_max_of_target_critics);
        let _ = writeln!(
            s,
            "sources = {}",
            self.sources.iter().map(SourceSpec::render).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(
            s,
            "seeds = {}",
            self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }
}

/// Integers, also written as `2e5` or `200_000`.
fn parse_count(s: &str) -> Option<u64> {
    let s = s.replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    let f = s.parse::<f64>().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < 1e18).then_some(f as u64)
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
