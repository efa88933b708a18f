//! Central finite-difference checks of every loss on random small batches.

use crate::HarnessError;
use cup_core::cup::{guidance_for_batch, CupConfig, GuidanceRegularizer};
use cup_core::distributions::GaussianHead;
use cup_core::envs::{ACTION_DIM, OBS_DIM};
use cup_core::sac::{Batch, SacAgent, SacConfig};
use cup_core::tensor::{grad_check, Activation, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const BATCH: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub loss: &'static str,
    pub batches: usize,
    pub max_rel_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

fn random_head<R: Rng>(rng: &mut R) -> GaussianHead {
    GaussianHead::new(
        (0..ACTION_DIM).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        (0..ACTION_DIM).map(|_| rng.gen_range(-1.5..0.5)).collect(),
    )
}

fn random_setup(seed: u64, n_sources: usize) -> Result<(SacAgent, Batch), HarnessError> {
    // tanh keeps every loss smooth inside the probe interval; relu kinks
    // would be crossed by some of the probes
    let cfg = SacConfig {
        hidden: vec![16, 16],
        activation: Activation::Tanh,
        ..SacConfig::new(OBS_DIM, ACTION_DIM)
    };
    let mut agent = SacAgent::new(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    agent.log_alpha = rng.gen_range(-3.0..0.0);
    for t in agent.target_critics.iter_mut() {
        for v in t.values_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let mut mat = |cols: usize, lo: f64, hi: f64| {
        Matrix::from_vec(BATCH, cols, (0..BATCH * cols).map(|_| rng.gen_range(lo..hi)).collect())
            .map_err(|e| HarnessError::Runtime(e.to_string()))
    };
    let states = mat(OBS_DIM, -1.0, 1.0)?;
    let actions = mat(ACTION_DIM, -0.9, 0.9)?;
    let next_states = mat(OBS_DIM, -1.0, 1.0)?;
    let batch = Batch {
        states,
        actions,
        rewards: (0..BATCH).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        next_states,
        dones: (0..BATCH).map(|_| rng.gen_bool(0.2)).collect(),
        source_heads: (0..BATCH)
            .map(|_| (0..n_sources).map(|_| random_head(&mut rng)).collect())
            .collect(),
    };
    Ok((agent, batch))
}

/// Critic, actor, entropy and CUP-actor gradients, each on `n_batches`
/// random batches. CUP batches without an active penalty are skipped.
pub fn run_grad_suite(n_batches: usize, seed: u64) -> Result<Vec<GradReport>, HarnessError> {
    let mut critic = 0.0f64;
    let mut actor = 0.0f64;
    let mut entropy = 0.0f64;
    for i in 0..n_batches as u64 {
        let (mut agent, batch) = random_setup(seed + i, 0)?;
        let next_noise = agent.standard_normal(BATCH);
        let noise = agent.standard_normal(BATCH);

        let c = agent.critic_loss(&batch, &next_noise)?;
        for k in 0..2 {
            let mut probe = agent.clone();
            critic = critic.max(grad_check(
                |v| {
                    probe.critics[k].values_mut().copy_from_slice(v);
                    probe.critic_loss(&batch, &next_noise).map_or(f64::NAN, |l| l.losses[k])
                },
                agent.critics[k].values(),
                c.grads[k].values(),
                FD_STEP,
            ));
        }

        let a = agent.actor_loss(&batch, &noise)?;
        let mut probe = agent.clone();
        actor = actor.max(grad_check(
            |v| {
                probe.actor.values_mut().copy_from_slice(v);
                probe.actor_loss(&batch, &noise).map_or(f64::NAN, |l| l.loss)
            },
            agent.actor.values(),
            a.grad.values(),
            FD_STEP,
        ));

        let e = agent.entropy_loss(&batch, &noise)?;
        let mut probe = agent.clone();
        entropy = entropy.max(grad_check(
            |v| {
                probe.log_alpha = v[0];
                probe.entropy_loss(&batch, &noise).map_or(f64::NAN, |l| l.loss)
            },
            &[agent.log_alpha],
            &[e.grad_log_alpha],
            FD_STEP,
        ));
    }

    // large beta2 so the clip leaves the penalty visible in the loss
    let cup_cfg = CupConfig {
        beta2: 10.0,
        ..CupConfig::default()
    };
    let mut cup = 0.0f64;
    let mut done = 0usize;
    let mut i = 0u64;
    while done < n_batches {
        if i > 50 * n_batches as u64 + 50 {
            return Err(HarnessError::Runtime(
                "too few random batches with an active guidance penalty".into(),
            ));
        }
        let (mut agent, batch) = random_setup(seed + 10_000 + i, 3)?;
        i += 1;
        let noise = agent.standard_normal(BATCH);
        let mut g_rng = ChaCha8Rng::seed_from_u64(seed + i);
        let (choices, weights) = guidance_for_batch(&agent, &batch, &cup_cfg, &mut g_rng)?;
        if weights.iter().all(|w| *w == 0.0) {
            continue;
        }
        let reg = GuidanceRegularizer {
            weights,
            heads: choices.iter().map(|c| c.chosen_head.clone()).collect(),
        };
        let out = agent.actor_loss_with(&batch.states, &noise, Some(&reg))?;
        let mut probe = agent.clone();
        cup = cup.max(grad_check(
            |v| {
                probe.actor.values_mut().copy_from_slice(v);
                probe
                    .actor_loss_with(&batch.states, &noise, Some(&reg))
                    .map_or(f64::NAN, |l| l.loss)
            },
            agent.actor.values(),
            out.grad.values(),
            FD_STEP,
        ));
        done += 1;
    }

    Ok(vec![
        GradReport { loss: "critic", batches: n_batches, max_rel_error: critic },
        GradReport { loss: "actor", batches: n_batches, max_rel_error: actor },
        GradReport { loss: "entropy", batches: n_batches, max_rel_error: entropy },
        GradReport { loss: "cup_actor", batches: n_batches, max_rel_error: cup },
    ])
}
