//! Critic-guided policy reuse.
//!
//! At every state of a gradient batch the candidates (cached source heads
//! plus the current target head) are scored by a K-sample estimate of
//! `E[Q(s,a) - alpha log pi(a|s)]` under the target critics. The best one is
//! the guidance head and the actor is pulled toward it with a KL penalty
//! weighted by `beta1 * min(EA, beta2 |V|)`.

use crate::distributions::{kl_pre_squash, kl_pre_squash_grad, GaussianHead, HeadGrad};
use crate::sac::{standard_normal_matrix, ActorLoss, ActorRegularizer, Batch, SacAgent, SacError, TrainMetrics};
use crate::tensor::Matrix;
use rand::Rng;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CupError {
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error("row {row} carries {got} source heads, expected {expected}")]
    SourceCount { row: usize, expected: usize, got: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("empty statistics stream")]
    EmptyStats,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CupConfig {
    pub beta1: f64,
    pub beta2: f64,
    /// K, samples per candidate.
    pub n_advantage_samples: usize,
    /// Gradient steps only add the KL term from this environment step on.
    pub regularization_start_step: u64,
    pub advantage_uses_max_of_target_critics: bool,
}

impl Default for CupConfig {
    fn default() -> Self {
        Self {
            beta1: 30.0,
            beta2: 3e-3,
            n_advantage_samples: 3,
            regularization_start_step: 5_000,
            advantage_uses_max_of_target_critics: true,
        }
    }
}

/// Sources first, target last.
#[derive(Debug, Clone, Copy)]
pub struct CandidateSet<'a> {
    pub source_heads: &'a [GaussianHead],
    pub target_head: &'a GaussianHead,
}

impl<'a> CandidateSet<'a> {
    pub fn len(&self) -> usize {
        self.source_heads.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> &'a GaussianHead {
        if i < self.source_heads.len() {
            &self.source_heads[i]
        } else {
            self.target_head
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceChoice {
    pub chosen_index: usize,
    pub chosen_head: GaussianHead,
    pub expected_advantage: f64,
    pub target_value_estimate: f64,
    /// Estimated soft value of every candidate, target last.
    pub candidate_values: Vec<f64>,
}

impl GuidanceChoice {
    pub fn target_chosen(&self) -> bool {
        self.chosen_index + 1 == self.candidate_values.len()
    }
}

/// Batched `Q(s, a)`.
pub trait CriticEval {
    fn eval(&self, states: &Matrix, actions: &Matrix) -> Vec<f64>;
}

/// Max (or min) of an agent's target critics.
pub struct TargetCritics<'a> {
    pub agent: &'a SacAgent,
    pub use_max: bool,
}

impl CriticEval for TargetCritics<'_> {
    fn eval(&self, states: &Matrix, actions: &Matrix) -> Vec<f64> {
        let q0 = self
            .agent
            .critic_values(&self.agent.target_critics[0], states, actions)
            .expect("critic dimensions checked at construction");
        let q1 = self
            .agent
            .critic_values(&self.agent.target_critics[1], states, actions)
            .expect("critic dimensions checked at construction");
        q0.iter()
            .zip(&q1)
            .map(|(a, b)| if self.use_max { a.max(*b) } else { a.min(*b) })
            .collect()
    }
}

/// Row-wise closure critic, mostly for tests.
pub struct FnCritic<F>(pub F);

impl<F: Fn(&[f64], &[f64]) -> f64> CriticEval for FnCritic<F> {
    fn eval(&self, states: &Matrix, actions: &Matrix) -> Vec<f64> {
        (0..states.rows())
            .map(|i| (self.0)(states.row(i), actions.row(i)))
            .collect()
    }
}

fn score(head: &GaussianHead, noise: &Matrix, first: usize, q: &[f64], alpha: f64) -> f64 {
    let k = q.len();
    let mut total = 0.0;
    for j in 0..k {
        let lp = head.sample(noise.row(first + j)).log_prob;
        total += q[j] - alpha * lp;
    }
    total / k as f64
}

/// `(1/k) sum_i [Q(s, a_i) - alpha log pi(a_i|s)]` over reparameterized samples.
pub fn estimate_soft_value<R: Rng + ?Sized>(
    head: &GaussianHead,
    critic: &dyn CriticEval,
    state: &[f64],
    alpha: f64,
    k: usize,
    rng: &mut R,
) -> f64 {
    let noise = standard_normal_matrix(rng, k, head.dim());
    let mut states = Matrix::zeros(k, state.len());
    let mut actions = Matrix::zeros(k, head.dim());
    for j in 0..k {
        states.row_mut(j).copy_from_slice(state);
        actions.row_mut(j).copy_from_slice(&head.sample(noise.row(j)).action);
    }
    let q = critic.eval(&states, &actions);
    score(head, &noise, 0, &q, alpha)
}

/// Pick the candidate with the largest estimated soft value. Each candidate
/// gets its own `k` samples, drawn in candidate order.
pub fn form_guidance<R: Rng + ?Sized>(
    candidates: CandidateSet<'_>,
    critic: &dyn CriticEval,
    state: &[f64],
    alpha: f64,
    config: &CupConfig,
    rng: &mut R,
) -> GuidanceChoice {
    let rows = Matrix::from_vec(1, state.len(), state.to_vec()).expect("sized");
    let sources = [candidates.source_heads.to_vec()];
    form_guidance_batch(
        &rows,
        std::slice::from_ref(candidates.target_head),
        &sources,
        critic,
        alpha,
        config,
        rng,
    )
    .remove(0)
}

/// [`form_guidance`] for every row of `states` with one critic call.
/// Noise is drawn row by row, so the result equals the per-row calls.
pub fn form_guidance_batch<R: Rng + ?Sized>(
    states: &Matrix,
    target_heads: &[GaussianHead],
    source_heads: &[Vec<GaussianHead>],
    critic: &dyn CriticEval,
    alpha: f64,
    config: &CupConfig,
    rng: &mut R,
) -> Vec<GuidanceChoice> {
    let b = states.rows();
    let k = config.n_advantage_samples.max(1);
    let d = target_heads.first().map_or(0, GaussianHead::dim);
    let per_row: Vec<usize> = source_heads.iter().map(|s| s.len() + 1).collect();
    let total: usize = per_row.iter().sum::<usize>() * k;

    let noise = standard_normal_matrix(rng, total, d);
    let mut rep_states = Matrix::zeros(total, states.cols());
    let mut actions = Matrix::zeros(total, d);
    let mut at = 0;
    for i in 0..b {
        let set = CandidateSet {
            source_heads: &source_heads[i],
            target_head: &target_heads[i],
        };
        for c in 0..set.len() {
            let head = set.get(c);
            for _ in 0..k {
                rep_states.row_mut(at).copy_from_slice(states.row(i));
                actions.row_mut(at).copy_from_slice(&head.sample(noise.row(at)).action);
                at += 1;
            }
        }
    }
    let q = critic.eval(&rep_states, &actions);

    let mut at = 0;
    (0..b)
        .map(|i| {
            let set = CandidateSet {
                source_heads: &source_heads[i],
                target_head: &target_heads[i],
            };
            let values: Vec<f64> = (0..set.len())
                .map(|c| {
                    let v = score(set.get(c), &noise, at, &q[at..at + k], alpha);
                    at += k;
                    v
                })
                .collect();
            choose(set, values)
        })
        .collect()
}

fn choose(set: CandidateSet<'_>, values: Vec<f64>) -> GuidanceChoice {
    let target = set.len() - 1;
    let v_target = values[target];
    // a source wins only with strictly positive advantage
    let mut best = target;
    let mut best_ea = 0.0;
    for (c, v) in values[..target].iter().enumerate() {
        let ea = v - v_target;
        if ea > best_ea {
            best = c;
            best_ea = ea;
        }
    }
    assert!(
        values.iter().all(|v| *v <= values[best] || v.is_nan()),
        "guidance is not the argmax: {values:?} chose {best}"
    );
    GuidanceChoice {
        chosen_index: best,
        chosen_head: set.get(best).clone(),
        expected_advantage: best_ea,
        target_value_estimate: v_target,
        candidate_values: values,
    }
}

/// `beta1 * min(EA, beta2 |V|)`.
pub fn adaptive_weight(choice: &GuidanceChoice, config: &CupConfig) -> f64 {
    config.beta1
        * choice
            .expected_advantage
            .min(config.beta2 * choice.target_value_estimate.abs())
}

/// Fixed per-row KL targets and weights.
#[derive(Debug, Clone)]
pub struct GuidanceRegularizer {
    pub weights: Vec<f64>,
    pub heads: Vec<GaussianHead>,
}

impl ActorRegularizer for GuidanceRegularizer {
    fn penalty(&self, row: usize, head: &GaussianHead) -> Option<(f64, HeadGrad)> {
        let beta = self.weights[row];
        if beta == 0.0 {
            return None;
        }
        let g = &self.heads[row];
        let mut grad = kl_pre_squash_grad(head, g);
        grad.mean.iter_mut().for_each(|x| *x *= beta);
        grad.log_std.iter_mut().for_each(|x| *x *= beta);
        Some((beta * kl_pre_squash(head, g), grad))
    }
}

/// Guidance for a batch under the agent's current actor and target critics.
pub fn guidance_for_batch<R: Rng + ?Sized>(
    agent: &SacAgent,
    batch: &Batch,
    config: &CupConfig,
    rng: &mut R,
) -> Result<(Vec<GuidanceChoice>, Vec<f64>), CupError> {
    let n = batch.source_heads.first().map_or(0, Vec::len);
    for (row, s) in batch.source_heads.iter().enumerate() {
        if s.len() != n {
            return Err(CupError::SourceCount {
                row,
                expected: n,
                got: s.len(),
            });
        }
    }
    let target_heads = agent.actor_heads(&batch.states)?;
    let critic = TargetCritics {
        agent,
        use_max: config.advantage_uses_max_of_target_critics,
    };
    let choices = form_guidance_batch(
        &batch.states,
        &target_heads,
        &batch.source_heads,
        &critic,
        agent.alpha(),
        config,
        rng,
    );
    let weights = choices.iter().map(|c| adaptive_weight(c, config)).collect();
    Ok((choices, weights))
}

/// Per-gradient-step selection record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub selected: Vec<u64>,
    /// Sum over states of each candidate's estimated advantage over the target.
    pub advantage_sum: Vec<f64>,
    /// Sum of weights at states where the candidate was chosen.
    pub beta_sum: Vec<f64>,
    pub states: u64,
}

impl StepStats {
    pub fn new(n_candidates: usize) -> Self {
        Self {
            selected: vec![0; n_candidates],
            advantage_sum: vec![0.0; n_candidates],
            beta_sum: vec![0.0; n_candidates],
            states: 0,
        }
    }

    pub fn from_choices(choices: &[GuidanceChoice], weights: &[f64]) -> Self {
        let n = choices.first().map_or(1, |c| c.candidate_values.len());
        let mut s = Self::new(n);
        for (c, w) in choices.iter().zip(weights) {
            s.record(c, *w);
        }
        s
    }

    pub fn record(&mut self, choice: &GuidanceChoice, weight: f64) {
        let target = choice.candidate_values.len() - 1;
        let vt = choice.candidate_values[target];
        for (i, v) in choice.candidate_values.iter().enumerate() {
            self.advantage_sum[i] += if i == target { 0.0 } else { v - vt };
        }
        self.selected[choice.chosen_index] += 1;
        self.beta_sum[choice.chosen_index] += weight;
        self.states += 1;
    }

    pub fn merge(&mut self, other: &StepStats) {
        for i in 0..self.selected.len() {
            self.selected[i] += other.selected[i];
            self.advantage_sum[i] += other.advantage_sum[i];
            self.beta_sum[i] += other.beta_sum[i];
        }
        self.states += other.states;
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.states.max(1) as f64;
        self.selected.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn mean_advantage(&self) -> Vec<f64> {
        let n = self.states.max(1) as f64;
        self.advantage_sum.iter().map(|s| s / n).collect()
    }

    pub fn mean_beta(&self) -> Vec<f64> {
        self.beta_sum
            .iter()
            .zip(&self.selected)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }

    /// Mean weight over all states.
    pub fn mean_beta_overall(&self) -> f64 {
        self.beta_sum.iter().sum::<f64>() / self.states.max(1) as f64
    }
}

/// Checks the guidance invariants on one batch.
pub fn check_guidance(
    choices: &[GuidanceChoice],
    weights: &[f64],
    config: &CupConfig,
) -> Result<(), CupError> {
    for (i, (c, &w)) in choices.iter().zip(weights).enumerate() {
        let best = c.candidate_values[c.chosen_index];
        if c.candidate_values.iter().any(|v| *v > best) {
            return Err(CupError::Invariant(format!("row {i}: chosen value is not maximal")));
        }
        if c.target_chosen() && w != 0.0 {
            return Err(CupError::Invariant(format!("row {i}: weight {w} with target chosen")));
        }
        if !(w >= 0.0 && w <= config.beta1 * (config.beta2 * c.target_value_estimate.abs())) {
            return Err(CupError::Invariant(format!("row {i}: weight {w} outside clip bound")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CupActorLoss {
    pub loss: ActorLoss,
    pub choices: Vec<GuidanceChoice>,
    pub weights: Vec<f64>,
    pub stats: StepStats,
}

/// Actor loss plus the weighted KL toward the guidance heads. Guidance is
/// formed whenever sources exist; the penalty only from the onset step.
pub fn cup_actor_loss<R: Rng + ?Sized>(
    agent: &SacAgent,
    batch: &Batch,
    config: &CupConfig,
    global_step: u64,
    noise: &Matrix,
    rng: &mut R,
) -> Result<CupActorLoss, CupError> {
    let n_sources = batch.source_heads.first().map_or(0, Vec::len);
    if n_sources == 0 {
        let loss = agent.actor_loss(batch, noise)?;
        let b = batch.len();
        let mut stats = StepStats::new(1);
        stats.selected[0] = b as u64;
        stats.states = b as u64;
        return Ok(CupActorLoss {
            loss,
            choices: Vec::new(),
            weights: vec![0.0; b],
            stats,
        });
    }
    let (choices, weights) = guidance_for_batch(agent, batch, config, rng)?;
    let stats = StepStats::from_choices(&choices, &weights);
    let reg = GuidanceRegularizer {
        weights: weights.clone(),
        heads: choices.iter().map(|c| c.chosen_head.clone()).collect(),
    };
    let active = global_step >= config.regularization_start_step;
    let loss = agent.actor_loss_with(
        &batch.states,
        noise,
        if active { Some(&reg) } else { None },
    )?;
    Ok(CupActorLoss {
        loss,
        choices,
        weights,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CupStepReport {
    pub metrics: TrainMetrics,
    pub stats: StepStats,
    pub choices: Vec<GuidanceChoice>,
    pub weights: Vec<f64>,
}

/// One CUP gradient step. Guidance uses `guidance_rng`, never the agent's
/// own noise stream, so with no sources this is exactly a SAC step.
pub fn cup_train_step<R: Rng + ?Sized>(
    agent: &mut SacAgent,
    batch: &Batch,
    config: &CupConfig,
    global_step: u64,
    guidance_rng: &mut R,
) -> Result<CupStepReport, CupError> {
    let n_sources = batch.source_heads.first().map_or(0, Vec::len);
    if n_sources == 0 {
        let metrics = agent.train_step(batch)?;
        let b = batch.len() as u64;
        let mut stats = StepStats::new(1);
        stats.selected[0] = b;
        stats.states = b;
        return Ok(CupStepReport {
            metrics,
            stats,
            choices: Vec::new(),
            weights: Vec::new(),
        });
    }
    // the critic update leaves actor, target critics and alpha untouched, so
    // guidance formed here equals guidance formed right before the actor step
    let (choices, weights) = guidance_for_batch(agent, batch, config, guidance_rng)?;
    let stats = StepStats::from_choices(&choices, &weights);
    let reg = GuidanceRegularizer {
        weights: weights.clone(),
        heads: choices.iter().map(|c| c.chosen_head.clone()).collect(),
    };
    let active = global_step >= config.regularization_start_step;
    let metrics = agent.train_step_with(batch, if active { Some(&reg) } else { None })?;
    Ok(CupStepReport {
        metrics,
        stats,
        choices,
        weights,
    })
}

/// Selection statistics over training.
#[derive(Debug, Clone, Default)]
pub struct SelectionStats {
    pub records: Vec<(u64, StepStats)>,
}

impl SelectionStats {
    pub fn push(&mut self, iteration: u64, stats: StepStats) {
        self.records.push((iteration, stats));
    }

    /// Everything recorded, merged.
    pub fn total(&self) -> Result<StepStats, CupError> {
        let (_, first) = self.records.first().ok_or(CupError::EmptyStats)?;
        let mut t = StepStats::new(first.selected.len());
        for (_, s) in &self.records {
            t.merge(s);
        }
        Ok(t)
    }

    /// Columns: iteration, candidate_id, fraction_selected,
    /// mean_expected_advantage, mean_beta_s.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), CupError> {
        if self.records.is_empty() {
            return Err(CupError::EmptyStats);
        }
        writeln!(out, "iteration,candidate_id,fraction_selected,mean_expected_advantage,mean_beta_s")?;
        for (it, s) in &self.records {
            let (f, a, b) = (s.fractions(), s.mean_advantage(), s.mean_beta());
            for c in 0..f.len() {
                writeln!(out, "{it},{c},{},{},{}", f[c], a[c], b[c])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
