//! Frozen source policies queried once per environment step.

use crate::config::{ExperimentConfig, SourceSpec};
use crate::HarnessError;
use cup_core::checkpoint;
use cup_core::distributions::GaussianHead;
use cup_core::envs::{ACTION_DIM, OBS_DIM};
use cup_core::sac::{policy_heads, SacAgent};
use cup_core::tensor::{Activation, Matrix, ParamVector};

#[derive(Debug, Clone)]
pub struct SourcePolicy {
    pub label: String,
    pub actor: ParamVector,
    pub activation: Activation,
}

impl SourcePolicy {
    /// Loads a checkpoint, or builds an untrained actor for `random:<seed>`.
    /// Refuses policies whose dimensions differ from the task.
    pub fn load(spec: &SourceSpec, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let (label, agent) = match spec {
            SourceSpec::Checkpoint(path) => {
                if !path.exists() {
                    return Err(HarnessError::Config(format!(
                        "source checkpoint {} does not exist",
                        path.display()
                    )));
                }
                let agent = checkpoint::load(path).map_err(|e| {
                    HarnessError::Config(format!("cannot load source {}: {e}", path.display()))
                })?;
                (path.display().to_string(), agent)
            }
            SourceSpec::Random(seed) => (
                format!("random:{seed}"),
                SacAgent::new(&cfg.sac_config(), *seed)
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
            ),
        };
        if agent.obs_dim != OBS_DIM || agent.action_dim != ACTION_DIM {
            return Err(HarnessError::Config(format!(
                "source {label} has obs/action dims {}/{}, task needs {OBS_DIM}/{ACTION_DIM}",
                agent.obs_dim, agent.action_dim
            )));
        }
        Ok(Self {
            label,
            actor: agent.actor,
            activation: agent.activation,
        })
    }
}

/// All sources of a run plus a count of forward evaluations.
#[derive(Debug, Clone, Default)]
pub struct SourceSet {
    pub policies: Vec<SourcePolicy>,
    forward_calls: u64,
}

impl SourceSet {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let policies = cfg
            .sources
            .iter()
            .map(|s| SourcePolicy::load(s, cfg))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            policies,
            forward_calls: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Number of single-state source forward passes so far.
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls
    }

    /// Heads of every source at `obs`, one forward pass each.
    pub fn heads(&mut self, obs: &[f64]) -> Result<Vec<GaussianHead>, HarnessError> {
        let m = Matrix::from_vec(1, obs.len(), obs.to_vec())
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let mut out = Vec::with_capacity(self.policies.len());
        for p in &self.policies {
            out.push(policy_heads(&p.actor, p.activation, &m)?.remove(0));
            self.forward_calls += 1;
        }
        Ok(out)
    }
}
