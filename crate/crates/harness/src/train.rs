//! The outer training loop shared by plain SAC and CUP runs.

use crate::config::ExperimentConfig;
use crate::metrics::{merge_csv, MetricsRow, MetricsWriter};
use crate::sources::SourceSet;
use crate::HarnessError;
use cup_core::checkpoint;
use cup_core::cup::{check_guidance, cup_train_step, SelectionStats, StepStats};
use cup_core::envs::{observation, reset, step, TaskSpec, OBS_DIM};
use cup_core::replay::{ReplayBuffer, Transition};
use cup_core::sac::{Batch, SacAgent, TrainMetrics};
use cup_core::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Plain SAC; sources must be empty.
    Source,
    Cup,
}

const ENV_STREAM: u64 = 1;
const ACTION_STREAM: u64 = 2;
const REPLAY_STREAM: u64 = 3;
const GUIDANCE_STREAM: u64 = 4;
const EVAL_STREAM: u64 = 5;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Deterministic-policy evaluation, all episodes stepped together. An
/// episode succeeds if the goal is reached at any step.
pub fn evaluate(
    agent: &SacAgent,
    spec: &TaskSpec,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalResult, HarnessError> {
    let mut states: Vec<_> = (0..episodes).map(|_| reset(spec, rng)).collect();
    let mut returns = vec![0.0; episodes];
    let mut success = vec![false; episodes];
    for _ in 0..spec.horizon {
        let mut data = Vec::with_capacity(episodes * OBS_DIM);
        for s in &states {
            data.extend_from_slice(&observation(s, spec));
        }
        let obs = Matrix::from_vec(episodes, OBS_DIM, data)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let heads = agent.actor_heads(&obs)?;
        for (i, head) in heads.iter().enumerate() {
            let out = step(&states[i], &head.mode(), spec);
            returns[i] += out.reward;
            success[i] |= out.success;
            states[i] = out.next;
        }
    }
    let n = episodes as f64;
    Ok(EvalResult {
        mean_return: returns.iter().sum::<f64>() / n,
        success_rate: success.iter().filter(|&&s| s).count() as f64 / n,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub env_steps: u64,
    pub gradient_steps: u64,
    pub evals: Vec<MetricsRow>,
    /// First evaluation step at or above the success threshold.
    pub steps_to_threshold: Option<u64>,
    pub final_success: f64,
    pub n_sources: usize,
    pub source_forward_calls: u64,
    /// Batch rows whose guidance passed [`check_guidance`].
    pub guidance_rows_checked: u64,
    pub selection_total: Option<StepStats>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("agent_seed{seed}.ckpt"))
}

pub fn selection_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("selection_seed{seed}.csv"))
}

/// Loss and selection averages between two evaluations.
struct Window {
    critic: f64,
    actor: f64,
    steps: u64,
    stats: StepStats,
}

impl Window {
    fn new(n_candidates: usize) -> Self {
        Self {
            critic: 0.0,
            actor: 0.0,
            steps: 0,
            stats: StepStats::new(n_candidates),
        }
    }

    fn add(&mut self, m: &TrainMetrics, stats: &StepStats) {
        self.critic += m.critic_loss;
        self.actor += m.actor_loss;
        self.steps += 1;
        self.stats.merge(stats);
    }

    /// Before any gradient step the target is the only candidate used.
    fn fractions(&self) -> Vec<f64> {
        if self.stats.states == 0 {
            let mut f = vec![0.0; self.stats.selected.len()];
            *f.last_mut().expect("at least the target") = 1.0;
            f
        } else {
            self.stats.fractions()
        }
    }

    fn mean(&self, sum: f64) -> f64 {
        if self.steps == 0 {
            f64::NAN
        } else {
            sum / self.steps as f64
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    if !dir.is_dir() {
        return Err(HarnessError::io(dir, "not a directory"));
    }
    Ok(())
}

/// One seed of training. `sources` is consumed so its forward-call count
/// belongs to this run alone.
pub fn run_seed(
    cfg: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    mut sources: SourceSet,
) -> Result<RunResult, HarnessError> {
    if mode == Mode::Source && !sources.is_empty() {
        return Err(HarnessError::Config("train-source takes no sources".into()));
    }
    let dir = cfg.output_dir.clone();
    ensure_dir(&dir)?;
    let spec = cfg.task_spec(seed);
    let n_sources = sources.len();
    let n_candidates = n_sources + 1;

    let mut agent = SacAgent::new(&cfg.sac_config(), seed)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, n_sources)?;
    let mut env_rng = stream(seed, ENV_STREAM);
    let mut action_rng = stream(seed, ACTION_STREAM);
    let mut replay_rng = stream(seed, REPLAY_STREAM);
    let mut guidance_rng = stream(seed, GUIDANCE_STREAM);

    let mpath = metrics_path(&dir, seed);
    let mut writer = MetricsWriter::create(&mpath, n_candidates)?;
    let mut evals = Vec::new();
    let mut selection = SelectionStats::default();
    let mut window = Window::new(n_candidates);
    let mut steps_to_threshold = None;
    let mut gradient_steps = 0u64;
    let mut checked = 0u64;
    let mut env_steps = 0u64;

    let mut state = reset(&spec, &mut env_rng);
    for t in 1..=cfg.total_env_steps {
        let obs = observation(&state, &spec);
        let action = if t <= cfg.exploration_steps {
            (0..agent.action_dim)
                .map(|_| action_rng.gen_range(-1.0..1.0))
                .collect()
        } else {
            agent.act(&obs, &mut action_rng)?
        };
        let out = step(&state, &action, &spec);
        let source_heads = sources.heads(&obs)?;
        buffer.push(Transition {
            state: obs.to_vec(),
            action,
            reward: out.reward * cfg.reward_scale,
            next_state: observation(&out.next, &spec).to_vec(),
            // the horizon is a time limit, not a terminal state
            done: false,
            source_heads,
        })?;
        state = if out.done {
            reset(&spec, &mut env_rng)
        } else {
            out.next
        };
        env_steps = t;

        if t > cfg.exploration_steps
            && t % cfg.env_steps_per_train_step == 0
            && buffer.len() >= cfg.batch_size
        {
            let batch = Batch::from_transitions(&buffer.sample(cfg.batch_size, &mut replay_rng)?)?;
            let (metrics, stats) = match mode {
                Mode::Source => {
                    let m = agent.train_step(&batch)?;
                    let mut s = StepStats::new(1);
                    s.selected[0] = batch.len() as u64;
                    s.states = batch.len() as u64;
                    (m, s)
                }
                Mode::Cup => {
                    let rep = cup_train_step(&mut agent, &batch, &cfg.cup, t, &mut guidance_rng)?;
                    if n_sources > 0 {
                        check_guidance(&rep.choices, &rep.weights, &cfg.cup)?;
                        checked += rep.choices.len() as u64;
                    }
                    (rep.metrics, rep.stats)
                }
            };
            let total: f64 = stats.fractions().iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(HarnessError::Runtime(format!(
                    "selection fractions sum to {total} at step {t}"
                )));
            }
            gradient_steps += 1;
            if n_sources > 0 {
                selection.push(gradient_steps, stats.clone());
            }
            window.add(&metrics, &stats);
        }

        if t % cfg.eval_every == 0 {
            let mut eval_rng = stream(seed, EVAL_STREAM);
            let ev = evaluate(&agent, &spec, cfg.eval_episodes, &mut eval_rng)?;
            let row = MetricsRow {
                seed,
                env_step: t,
                mean_eval_return: ev.mean_return,
                success_rate: ev.success_rate,
                alpha: agent.alpha(),
                critic_loss: window.mean(window.critic),
                actor_loss: window.mean(window.actor),
                mean_beta_s: window.stats.mean_beta_overall(),
                selection: window.fractions(),
            };
            writer.write(&row)?;
            evals.push(row);
            window = Window::new(n_candidates);
            if steps_to_threshold.is_none() && ev.success_rate >= cfg.success_threshold {
                steps_to_threshold = Some(t);
                if cfg.stop_at_threshold {
                    break;
                }
            }
        }
    }

    let cpath = checkpoint_path(&dir, seed);
    checkpoint::save(&agent, &cpath).map_err(|e| HarnessError::io(&cpath, e))?;
    let selection_total = if n_sources > 0 && !selection.records.is_empty() {
        let spath = selection_path(&dir, seed);
        let file = File::create(&spath).map_err(|e| HarnessError::io(&spath, e))?;
        selection.write_csv(BufWriter::new(file))?;
        Some(selection.total()?)
    } else {
        None
    };
    Ok(RunResult {
        seed,
        env_steps,
        gradient_steps,
        final_success: evals.last().map_or(0.0, |r| r.success_rate),
        evals,
        steps_to_threshold,
        n_sources,
        source_forward_calls: sources.forward_calls(),
        guidance_rows_checked: checked,
        selection_total,
        metrics_path: mpath,
        checkpoint_path: cpath,
    })
}

/// Runs every configured seed in order and merges the per-seed metrics into
/// `metrics.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode) -> Result<Vec<RunResult>, HarnessError> {
    cfg.validate()?;
    ensure_dir(&cfg.output_dir)?;
    let sources = SourceSet::load(cfg)?;
    let cfg_path = cfg.output_dir.join("config.txt");
    std::fs::write(&cfg_path, cfg.render()).map_err(|e| HarnessError::io(&cfg_path, e))?;
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        results.push(run_seed(cfg, mode, seed, sources.clone())?);
    }
    let paths: Vec<&Path> = results.iter().map(|r| r.metrics_path.as_path()).collect();
    merge_csv(&paths, &cfg.output_dir.join("metrics.csv"))?;
    Ok(results)
}

pub fn train_source(cfg: &ExperimentConfig) -> Result<Vec<RunResult>, HarnessError> {
    run_experiment(cfg, Mode::Source)
}

pub fn train_cup(cfg: &ExperimentConfig) -> Result<Vec<RunResult>, HarnessError> {
    run_experiment(cfg, Mode::Cup)
}

/// Median with unreached thresholds counted as infinite.
pub fn median_steps(results: &[Option<u64>]) -> f64 {
    let mut v: Vec<f64> = results
        .iter()
        .map(|s| s.map_or(f64::INFINITY, |x| x as f64))
        .collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            a.max(b)
        } else {
            0.5 * (a + b)
        }
    }
}
