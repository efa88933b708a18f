//! Soft actor-critic with twin critics, Polyak-averaged target critics and a
//! learned entropy temperature.
//!
//! Losses are computed on explicit noise matrices so every gradient is a
//! deterministic function of `(agent, batch, noise)` and can be checked
//! against finite differences.

use crate::distributions::{GaussianHead, HeadGrad, LOG_STD_MAX, LOG_STD_MIN};
use crate::replay::Transition;
use crate::tensor::{
    forward_batch, predict_batch, Activation, Activations, AdamConfig, AdamState, Matrix,
    ParamVector, TensorError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SacError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub gamma: f64,
    pub tau: f64,
    pub initial_alpha: f64,
    /// Defaults to `-action_dim` when `None`.
    pub target_entropy: Option<f64>,
}

impl SacConfig {
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            gamma: 0.99,
            tau: 0.005,
            initial_alpha: 1.0,
            target_entropy: None,
        }
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: &str| Err(SacError::InvalidConfig(m.to_string()));
        if self.obs_dim == 0 || self.action_dim == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.initial_alpha > 0.0) {
            return bad("initial alpha must be positive");
        }
        if [self.actor_lr, self.critic_lr, self.alpha_lr]
            .iter()
            .any(|lr| !(*lr > 0.0))
        {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// Columnar view of sampled transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub dones: Vec<bool>,
    /// `source_heads[row][source]`.
    pub source_heads: Vec<Vec<GaussianHead>>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self, SacError> {
        if ts.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let states: Vec<&[f64]> = ts.iter().map(|t| t.state.as_slice()).collect();
        let actions: Vec<&[f64]> = ts.iter().map(|t| t.action.as_slice()).collect();
        let next: Vec<&[f64]> = ts.iter().map(|t| t.next_state.as_slice()).collect();
        Ok(Self {
            states: Matrix::from_rows(&states)?,
            actions: Matrix::from_rows(&actions)?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: Matrix::from_rows(&next)?,
            dones: ts.iter().map(|t| t.done).collect(),
            source_heads: ts.iter().map(|t| t.source_heads.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub const ACTOR_ACTIVATIONS: fn(Activation) -> Activations =
    |hidden| Activations::new(hidden, Activation::Identity);

/// Per-row penalty added to the actor loss (averaged over the batch).
pub trait ActorRegularizer {
    /// Penalty at `row` and its gradient w.r.t. the actor's head there.
    fn penalty(&self, row: usize, head: &GaussianHead) -> Option<(f64, HeadGrad)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticLoss {
    /// Mean squared Bellman error of each live critic.
    pub losses: [f64; 2],
    pub grads: [ParamVector; 2],
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    /// Mean regularizer contribution included in `loss`.
    pub regularizer: f64,
    pub grad: ParamVector,
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyLoss {
    pub loss: f64,
    pub grad_log_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainMetrics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub regularizer: f64,
    pub entropy_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub activation: Activation,
    pub actor: ParamVector,
    pub critics: [ParamVector; 2],
    pub target_critics: [ParamVector; 2],
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub tau: f64,
    pub gamma: f64,
    pub actor_opt: AdamState,
    pub critic_opts: [AdamState; 2],
    pub alpha_opt: AdamState,
    /// Noise stream for the losses.
    pub rng: ChaCha8Rng,
}

impl SacAgent {
    pub fn new(config: &SacConfig, seed: u64) -> Result<Self, SacError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![config.obs_dim];
        widths.extend(&config.hidden);
        widths.push(2 * config.action_dim);
        let actor = ParamVector::init_uniform(&widths, &mut rng)?;
        let mut critic_widths = vec![config.obs_dim + config.action_dim];
        critic_widths.extend(&config.hidden);
        critic_widths.push(1);
        let critics = [
            ParamVector::init_uniform(&critic_widths, &mut rng)?,
            ParamVector::init_uniform(&critic_widths, &mut rng)?,
        ];
        Ok(Self {
            obs_dim: config.obs_dim,
            action_dim: config.action_dim,
            activation: config.activation,
            actor_opt: AdamState::new(actor.len(), config.adam(config.actor_lr)),
            critic_opts: [
                AdamState::new(critics[0].len(), config.adam(config.critic_lr)),
                AdamState::new(critics[1].len(), config.adam(config.critic_lr)),
            ],
            alpha_opt: AdamState::new(1, config.adam(config.alpha_lr)),
            actor,
            target_critics: critics.clone(),
            critics,
            log_alpha: config.initial_alpha.ln(),
            target_entropy: config
                .target_entropy
                .unwrap_or(-(config.action_dim as f64)),
            tau: config.tau,
            gamma: config.gamma,
            rng,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn activations(&self) -> Activations {
        Activations::new(self.activation, Activation::Identity)
    }

    pub fn actor_heads(&self, states: &Matrix) -> Result<Vec<GaussianHead>, SacError> {
        policy_heads(&self.actor, self.activation, states)
    }

    pub fn head(&self, obs: &[f64]) -> Result<GaussianHead, SacError> {
        let m = Matrix::from_vec(1, obs.len(), obs.to_vec())?;
        Ok(self.actor_heads(&m)?.remove(0))
    }

    /// `Q(s, a)` for each row under the given critic parameters.
    pub fn critic_values(
        &self,
        critic: &ParamVector,
        states: &Matrix,
        actions: &Matrix,
    ) -> Result<Vec<f64>, SacError> {
        let input = Matrix::hstack(states, actions)?;
        Ok(predict_batch(critic, self.activations(), &input)?.into_vec())
    }

    pub fn standard_normal(&mut self, rows: usize) -> Matrix {
        standard_normal_matrix(&mut self.rng, rows, self.action_dim)
    }

    pub fn critic_loss(&self, batch: &Batch, next_noise: &Matrix) -> Result<CriticLoss, SacError> {
        let b = batch.len();
        if b == 0 {
            return Err(SacError::EmptyBatch);
        }
        let alpha = self.alpha();
        let next_heads = self.actor_heads(&batch.next_states)?;
        let mut next_actions = Matrix::zeros(b, self.action_dim);
        let mut next_log_probs = Vec::with_capacity(b);
        for (i, h) in next_heads.iter().enumerate() {
            let s = h.sample(next_noise.row(i));
            next_actions.row_mut(i).copy_from_slice(&s.action);
            next_log_probs.push(s.log_prob);
        }
        let qt0 = self.critic_values(&self.target_critics[0], &batch.next_states, &next_actions)?;
        let qt1 = self.critic_values(&self.target_critics[1], &batch.next_states, &next_actions)?;
        let targets: Vec<f64> = (0..b)
            .map(|i| {
                let v_next = qt0[i].min(qt1[i]) - alpha * next_log_probs[i];
                let not_done = if batch.dones[i] { 0.0 } else { 1.0 };
                batch.rewards[i] + self.gamma * not_done * v_next
            })
            .collect();

        let input = Matrix::hstack(&batch.states, &batch.actions)?;
        let mut losses = [0.0; 2];
        let mut grads = Vec::with_capacity(2);
        for (k, critic) in self.critics.iter().enumerate() {
            let pass = forward_batch(critic, self.activations(), &input)?;
            let q = pass.output().as_slice();
            let mut upstream = Matrix::zeros(b, 1);
            let mut loss = 0.0;
            for i in 0..b {
                let err = q[i] - targets[i];
                loss += err * err;
                upstream.set(i, 0, 2.0 * err / b as f64);
            }
            losses[k] = loss / b as f64;
            check_finite("critic loss", losses[k])?;
            grads.push(pass.backward_params(critic, &upstream)?);
        }
        let g1 = grads.pop().expect("two critics");
        let g0 = grads.pop().expect("two critics");
        Ok(CriticLoss {
            losses,
            grads: [g0, g1],
            targets,
        })
    }

    pub fn actor_loss(&self, batch: &Batch, noise: &Matrix) -> Result<ActorLoss, SacError> {
        self.actor_loss_with(&batch.states, noise, None)
    }

    /// `mean[alpha log pi(a|s) - min_k Q_k(s, a)] + mean[penalty]` with
    /// reparameterized actions; gradient w.r.t. the actor only.
    pub fn actor_loss_with(
        &self,
        states: &Matrix,
        noise: &Matrix,
        regularizer: Option<&dyn ActorRegularizer>,
    ) -> Result<ActorLoss, SacError> {
        let b = states.rows();
        if b == 0 {
            return Err(SacError::EmptyBatch);
        }
        let d = self.action_dim;
        let alpha = self.alpha();
        let pass = forward_batch(&self.actor, self.activations(), states)?;
        let raw = pass.output();
        let heads: Vec<GaussianHead> = (0..b)
            .map(|i| GaussianHead::from_network_output(raw.row(i)))
            .collect();
        let samples: Vec<_> = heads
            .iter()
            .enumerate()
            .map(|(i, h)| h.sample(noise.row(i)))
            .collect();
        let mut actions = Matrix::zeros(b, d);
        for (i, s) in samples.iter().enumerate() {
            actions.row_mut(i).copy_from_slice(&s.action);
        }
        let input = Matrix::hstack(states, &actions)?;
        let passes = [
            forward_batch(&self.critics[0], self.activations(), &input)?,
            forward_batch(&self.critics[1], self.activations(), &input)?,
        ];
        let q0 = passes[0].output().as_slice();
        let q1 = passes[1].output().as_slice();
        let scale = 1.0 / b as f64;
        let mut upstream = [Matrix::zeros(b, 1), Matrix::zeros(b, 1)];
        let mut loss = 0.0;
        for i in 0..b {
            let (q, k) = if q1[i] < q0[i] { (q1[i], 1) } else { (q0[i], 0) };
            loss += alpha * samples[i].log_prob - q;
            upstream[k].set(i, 0, -scale);
        }
        loss *= scale;
        let da0 = passes[0].backward_input(&self.critics[0], &upstream[0])?;
        let da1 = passes[1].backward_input(&self.critics[1], &upstream[1])?;

        let mut reg_total = 0.0;
        let mut raw_grad = Matrix::zeros(b, 2 * d);
        for i in 0..b {
            let d_action: Vec<f64> = (0..d)
                .map(|j| da0.get(i, self.obs_dim + j) + da1.get(i, self.obs_dim + j))
                .collect();
            let mut g = heads[i].sample_backward(noise.row(i), &d_action, alpha * scale);
            if let Some((value, rg)) = regularizer.and_then(|r| r.penalty(i, &heads[i])) {
                reg_total += value;
                for j in 0..d {
                    g.mean[j] += scale * rg.mean[j];
                    g.log_std[j] += scale * rg.log_std[j];
                }
            }
            let row = raw_grad.row_mut(i);
            for j in 0..d {
                row[j] = g.mean[j];
                let raw_log_std = raw.get(i, d + j);
                // clamped coordinates pass no gradient
                row[d + j] = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_log_std) {
                    g.log_std[j]
                } else {
                    0.0
                };
            }
        }
        let regularizer_mean = reg_total * scale;
        if regularizer.is_some() {
            loss += regularizer_mean;
        }
        check_finite("actor loss", loss)?;
        let grad = pass.backward_params(&self.actor, &raw_grad)?;
        Ok(ActorLoss {
            loss,
            regularizer: regularizer_mean,
            grad,
            log_probs: samples.iter().map(|s| s.log_prob).collect(),
        })
    }

    pub fn entropy_loss(&self, batch: &Batch, noise: &Matrix) -> Result<EntropyLoss, SacError> {
        let heads = self.actor_heads(&batch.states)?;
        let log_probs: Vec<f64> = heads
            .iter()
            .enumerate()
            .map(|(i, h)| h.sample(noise.row(i)).log_prob)
            .collect();
        self.entropy_loss_from_log_probs(&log_probs)
    }

    /// `mean[-alpha log pi - alpha H_target]`; log-probs are constants.
    pub fn entropy_loss_from_log_probs(&self, log_probs: &[f64]) -> Result<EntropyLoss, SacError> {
        if log_probs.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let alpha = self.alpha();
        let mean_lp = log_probs.iter().sum::<f64>() / log_probs.len() as f64;
        let loss = -alpha * (mean_lp + self.target_entropy);
        check_finite("entropy loss", loss)?;
        // d/d(log alpha) of -alpha * c is -alpha * c
        Ok(EntropyLoss {
            loss,
            grad_log_alpha: loss,
        })
    }

    pub fn polyak_update(&mut self) {
        let tau = self.tau;
        for (target, live) in self.target_critics.iter_mut().zip(&self.critics) {
            for (t, l) in target.values_mut().iter_mut().zip(live.values()) {
                *t = tau * l + (1.0 - tau) * *t;
            }
        }
    }

    /// One gradient step: critics, actor, temperature, then targets.
    pub fn train_step(&mut self, batch: &Batch) -> Result<TrainMetrics, SacError> {
        self.train_step_with(batch, None)
    }

    pub fn train_step_with(
        &mut self,
        batch: &Batch,
        regularizer: Option<&dyn ActorRegularizer>,
    ) -> Result<TrainMetrics, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let next_noise = self.standard_normal(batch.len());
        let noise = self.standard_normal(batch.len());

        let critic = self.critic_loss(batch, &next_noise)?;
        for k in 0..2 {
            self.critic_opts[k].step(self.critics[k].values_mut(), critic.grads[k].values())?;
        }

        let actor = self.actor_loss_with(&batch.states, &noise, regularizer)?;
        self.actor_opt
            .step(self.actor.values_mut(), actor.grad.values())?;

        let entropy = self.entropy_loss_from_log_probs(&actor.log_probs)?;
        let mut log_alpha = [self.log_alpha];
        self.alpha_opt
            .step(&mut log_alpha, &[entropy.grad_log_alpha])?;
        self.log_alpha = log_alpha[0];

        self.polyak_update();
        if !self.actor.all_finite() || !self.critics.iter().all(ParamVector::all_finite) {
            return Err(SacError::NonFinite {
                what: "parameters after update",
                value: f64::NAN,
            });
        }
        Ok(TrainMetrics {
            critic_loss: 0.5 * (critic.losses[0] + critic.losses[1]),
            actor_loss: actor.loss,
            regularizer: actor.regularizer,
            entropy_loss: entropy.loss,
            alpha: self.alpha(),
            mean_log_prob: actor.log_probs.iter().sum::<f64>() / actor.log_probs.len() as f64,
        })
    }

    /// Stochastic action for environment interaction.
    pub fn act<R: rand::Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>, SacError> {
        let head = self.head(obs)?;
        let noise: Vec<f64> = (0..self.action_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Ok(head.sample(&noise).action)
    }

    /// `tanh(mean)`, used for evaluation.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, SacError> {
        Ok(self.head(obs)?.mode())
    }
}

/// Heads of a policy network for each row of `states`.
pub fn policy_heads(
    actor: &ParamVector,
    hidden: Activation,
    states: &Matrix,
) -> Result<Vec<GaussianHead>, SacError> {
    let out = predict_batch(actor, ACTOR_ACTIVATIONS(hidden), states)?;
    Ok((0..out.rows())
        .map(|i| GaussianHead::from_network_output(out.row(i)))
        .collect())
}

pub fn standard_normal_matrix<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn check_finite(what: &'static str, value: f64) -> Result<(), SacError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(SacError::NonFinite { what, value })
    }
}
