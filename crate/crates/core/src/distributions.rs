//! Squashed (tanh) diagonal Gaussian policy heads.
//!
//! A head stores the pre-squash mean and log standard deviation. Actions are
//! `tanh(mean + std * noise)`; densities include the tanh change of variables.

use thiserror::Error;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Actions must satisfy `|a| < 1 - ACTION_BOUNDARY_MARGIN` for `log_prob`.
pub const ACTION_BOUNDARY_MARGIN: f64 = 1e-9;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("action coordinate {index} = {value} is outside the open cube")]
    ActionOutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: head has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh(u)^2)` evaluated without cancellation at saturation.
#[inline]
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: Vec<f64>,
    /// Pre-squash sample `mean + std * noise`.
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
}

/// Gradient of a scalar w.r.t. a head's mean and (clamped) log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl HeadGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }
}

impl GaussianHead {
    /// Builds a head, clamping `log_std` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    ///
    /// # Panics
    /// If `mean` and `log_std` differ in length.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean/log_std length mismatch");
        let log_std = log_std
            .into_iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Self { mean, log_std }
    }

    /// Splits a network output `[mean..., raw_log_std...]`.
    pub fn from_network_output(output: &[f64]) -> Self {
        let d = output.len() / 2;
        Self::new(output[..d].to_vec(), output[d..2 * d].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mode(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }

    /// Reparameterized sample for the given standard-normal noise.
    pub fn sample(&self, noise: &[f64]) -> ActionSample {
        debug_assert_eq!(noise.len(), self.dim());
        let mut action = Vec::with_capacity(self.dim());
        let mut pre_squash = Vec::with_capacity(self.dim());
        let mut log_prob = 0.0;
        for i in 0..self.dim() {
            let std = self.log_std[i].exp();
            let u = self.mean[i] + std * noise[i];
            log_prob += -0.5 * noise[i] * noise[i] - self.log_std[i] - HALF_LN_2PI
                - log_one_minus_tanh_sq(u);
            pre_squash.push(u);
            action.push(u.tanh());
        }
        ActionSample {
            action,
            pre_squash,
            log_prob,
        }
    }

    /// Backpropagates through [`GaussianHead::sample`] at fixed noise.
    ///
    /// `d_action` is the upstream gradient w.r.t. the squashed action and
    /// `d_log_prob` w.r.t. the sample's log-density.
    pub fn sample_backward(&self, noise: &[f64], d_action: &[f64], d_log_prob: f64) -> HeadGrad {
        let mut g = HeadGrad::zeros(self.dim());
        for i in 0..self.dim() {
            let std = self.log_std[i].exp();
            let u = self.mean[i] + std * noise[i];
            let a = u.tanh();
            // d log_prob / du = 2 tanh(u); direct d log_prob / d log_std = -1
            let du = d_action[i] * (1.0 - a * a) + d_log_prob * 2.0 * a;
            g.mean[i] = du;
            g.log_std[i] = du * std * noise[i] - d_log_prob;
        }
        g
    }

    /// Log-density of the squashed distribution at `action`.
    pub fn log_prob(&self, action: &[f64]) -> Result<f64, DistributionError> {
        if action.len() != self.dim() {
            return Err(DistributionError::DimensionMismatch {
                expected: self.dim(),
                got: action.len(),
            });
        }
        let mut lp = 0.0;
        for (i, &a) in action.iter().enumerate() {
            if !(a.abs() < 1.0 - ACTION_BOUNDARY_MARGIN) {
                return Err(DistributionError::ActionOutOfRange { index: i, value: a });
            }
            let u = a.atanh();
            let z = (u - self.mean[i]) / self.log_std[i].exp();
            lp += -0.5 * z * z - self.log_std[i] - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        }
        Ok(lp)
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn gaussian_entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 + HALF_LN_2PI).sum()
    }
}

/// Closed-form `KL(p || q)` between the pre-squash diagonal Gaussians.
///
/// Both heads share the invertible tanh squashing, so this equals the KL
/// between the squashed distributions.
pub fn kl_pre_squash(p: &GaussianHead, q: &GaussianHead) -> f64 {
    debug_assert_eq!(p.dim(), q.dim());
    let mut kl = 0.0;
    for i in 0..p.dim() {
        let var_ratio = (2.0 * (p.log_std[i] - q.log_std[i])).exp();
        let diff = p.mean[i] - q.mean[i];
        let q_var = (2.0 * q.log_std[i]).exp();
        kl += q.log_std[i] - p.log_std[i] + 0.5 * (var_ratio + diff * diff / q_var) - 0.5;
    }
    kl.max(0.0)
}

/// Gradient of [`kl_pre_squash`] w.r.t. `p`'s mean and log-std (`q` fixed).
pub fn kl_pre_squash_grad(p: &GaussianHead, q: &GaussianHead) -> HeadGrad {
    let mut g = HeadGrad::zeros(p.dim());
    for i in 0..p.dim() {
        let q_var = (2.0 * q.log_std[i]).exp();
        g.mean[i] = (p.mean[i] - q.mean[i]) / q_var;
        g.log_std[i] = (2.0 * (p.log_std[i] - q.log_std[i])).exp() - 1.0;
    }
    g
}
