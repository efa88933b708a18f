//! Exact evaluation on finite MDPs and checks of the guidance improvement
//! bounds.
//!
//! Values are soft (entropy-regularized, natural log) unless `alpha = 0`, in
//! which case they are ordinary discounted returns. KL divergences reported
//! as `delta` are in bits.

use crate::envs::{make_chain_mdp, TabularMdp};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub const EVAL_TOLERANCE: f64 = 1e-12;
pub const MARGIN_TOLERANCE: f64 = 1e-9;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TabularError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("evaluation did not converge after {sweeps} sweeps (residual {residual})")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error("singular occupancy system")]
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, TabularError> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(TabularError::Dimension(format!(
                "{} probabilities for {n_states}x{n_actions}",
                probs.len()
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(TabularError::InvalidPolicy(format!("negative entry in row {s}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(TabularError::InvalidPolicy(format!("row {s} sums to {total}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Softmax of standard-normal logits divided by `temperature`.
    pub fn random_softmax<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Self {
        let logits: Vec<f64> = (0..n_states * n_actions)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / temperature)
            .collect();
        Self::softmax_rows(n_states, n_actions, &logits)
    }

    pub fn softmax_rows(n_states: usize, n_actions: usize, logits: &[f64]) -> Self {
        let mut probs = Vec::with_capacity(logits.len());
        for s in 0..n_states {
            let row = &logits[s * n_actions..(s + 1) * n_actions];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            probs.extend(e.iter().map(|x| x / z));
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    /// `(1 - lambda) a + lambda b`, row by row.
    pub fn mixture(a: &Self, b: &Self, lambda: f64) -> Result<Self, TabularError> {
        if a.n_states != b.n_states || a.n_actions != b.n_actions {
            return Err(TabularError::Dimension("mixture of differently shaped policies".into()));
        }
        let probs = a
            .probs
            .iter()
            .zip(&b.probs)
            .map(|(x, y)| (1.0 - lambda) * x + lambda * y)
            .collect();
        Ok(Self {
            n_states: a.n_states,
            n_actions: a.n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy at `s` in nats, `0 log 0 = 0`.
    pub fn entropy(&self, s: usize) -> f64 {
        -self.row(s).iter().map(|&p| xlogx(p)).sum::<f64>()
    }

    fn check(&self, mdp: &TabularMdp) -> Result<(), TabularError> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(TabularError::Dimension(format!(
                "policy {}x{} on mdp {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `sum_a pi(a) [q(a) - alpha log pi(a)]`.
pub fn soft_expectation(pi: &[f64], q: &[f64], alpha: f64) -> f64 {
    pi.iter()
        .zip(q)
        .map(|(&p, &qa)| p * qa - alpha * xlogx(p))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `q[s * n_actions + a]`.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    /// Sup-norm change of `v` per sweep.
    pub residuals: Vec<f64>,
}

impl Evaluation {
    pub fn q_row(&self, s: usize) -> &[f64] {
        let n_a = self.q.len() / self.v.len();
        &self.q[s * n_a..(s + 1) * n_a]
    }
}

fn backup(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(mdp.n_states * mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let next: f64 = mdp
                .next_state_probs(s, a)
                .iter()
                .zip(v)
                .map(|(p, v)| p * v)
                .sum();
            q.push(mdp.reward(s, a) + mdp.gamma * next);
        }
    }
    q
}

/// Iterates the soft Bellman equations to a sup-norm change of `1e-12`.
pub fn soft_policy_eval(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    alpha: f64,
) -> Result<Evaluation, TabularError> {
    pi.check(mdp)?;
    let n_a = mdp.n_actions;
    let mut v = vec![0.0; mdp.n_states];
    let mut residuals = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let q = backup(mdp, &v);
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| soft_expectation(pi.row(s), &q[s * n_a..(s + 1) * n_a], alpha))
            .collect();
        let r = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residuals.push(r);
        v = next;
        if r <= EVAL_TOLERANCE {
            let q = backup(mdp, &v);
            return Ok(Evaluation { q, v, residuals });
        }
    }
    Err(TabularError::NotConverged {
        sweeps: MAX_SWEEPS,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

pub fn hard_policy_eval(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Evaluation, TabularError> {
    soft_policy_eval(mdp, pi, 0.0)
}

/// Discounted state occupancy from `s`: `(1 - gamma) (I - gamma P^T)^-1 e_s`.
pub fn occupancy(mdp: &TabularMdp, pi: &TabularPolicy, s: usize) -> Result<Vec<f64>, TabularError> {
    pi.check(mdp)?;
    let n = mdp.n_states;
    let mut m = DMatrix::<f64>::identity(n, n);
    for from in 0..n {
        for a in 0..mdp.n_actions {
            let p = pi.prob(from, a);
            for (to, q) in mdp.next_state_probs(from, a).iter().enumerate() {
                m[(to, from)] -= mdp.gamma * p * q;
            }
        }
    }
    let mut e = DVector::<f64>::zeros(n);
    e[s] = 1.0;
    let x = m.lu().solve(&e).ok_or(TabularError::Singular)?;
    Ok(x.iter().map(|v| (1.0 - mdp.gamma) * v).collect())
}

/// `E_{a~pi_new}[Q(s,a) - alpha log pi_new(a|s)] - V(s)` under `eval`.
pub fn expected_advantage(eval: &Evaluation, pi_new: &TabularPolicy, s: usize, alpha: f64) -> f64 {
    soft_expectation(pi_new.row(s), eval.q_row(s), alpha) - eval.v[s]
}

/// Largest violation of `V' - V = E_{mu'}[EA] / (1 - gamma)` over states.
pub fn performance_difference_error(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_new: &TabularPolicy,
    alpha: f64,
) -> Result<f64, TabularError> {
    let old = soft_policy_eval(mdp, pi, alpha)?;
    let new = soft_policy_eval(mdp, pi_new, alpha)?;
    let ea: Vec<f64> = (0..mdp.n_states)
        .map(|s| expected_advantage(&old, pi_new, s, alpha))
        .collect();
    let mut worst = 0.0f64;
    for s in 0..mdp.n_states {
        let mu = occupancy(mdp, pi_new, s)?;
        let rhs: f64 = mu.iter().zip(&ea).map(|(m, e)| m * e).sum::<f64>() / (1.0 - mdp.gamma);
        worst = worst.max((new.v[s] - old.v[s] - rhs).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactGuidance {
    pub policy: TabularPolicy,
    /// Candidate index per state; `sources.len()` is the target.
    pub chosen: Vec<usize>,
    /// Sup-norm of the critic perturbation used.
    pub epsilon: f64,
}

/// State-wise argmax of `E_pi[Q~ - alpha log pi]` over sources and target,
/// with `Q~ = Q_target + perturbation`. Ties go to the target.
pub fn form_guidance_exact(
    mdp: &TabularMdp,
    sources: &[TabularPolicy],
    target: &TabularPolicy,
    alpha: f64,
    q_perturbation: &[f64],
) -> Result<ExactGuidance, TabularError> {
    for p in sources {
        p.check(mdp)?;
    }
    let eval = soft_policy_eval(mdp, target, alpha)?;
    if q_perturbation.len() != eval.q.len() {
        return Err(TabularError::Dimension("perturbation length".into()));
    }
    let q_tilde: Vec<f64> = eval.q.iter().zip(q_perturbation).map(|(a, b)| a + b).collect();
    let n_a = mdp.n_actions;
    let mut probs = Vec::with_capacity(target.probs.len());
    let mut chosen = Vec::with_capacity(mdp.n_states);
    for s in 0..mdp.n_states {
        let q = &q_tilde[s * n_a..(s + 1) * n_a];
        let mut best = sources.len();
        let mut best_v = soft_expectation(target.row(s), q, alpha);
        for (i, src) in sources.iter().enumerate() {
            let v = soft_expectation(src.row(s), q, alpha);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        let row = if best == sources.len() {
            target.row(s)
        } else {
            sources[best].row(s)
        };
        probs.extend_from_slice(row);
        chosen.push(best);
    }
    Ok(ExactGuidance {
        policy: TabularPolicy {
            n_states: mdp.n_states,
            n_actions: n_a,
            probs,
        },
        chosen,
        epsilon: q_perturbation.iter().fold(0.0, |m, x| m.max(x.abs())),
    })
}

/// Alternates exact evaluation and `softmax(Q / alpha)` improvement (greedy
/// when `alpha = 0`) until values move by at most `tol`.
pub fn soft_policy_iteration(mdp: &TabularMdp, alpha: f64, tol: f64) -> Result<TabularPolicy, TabularError> {
    let n_a = mdp.n_actions;
    let mut pi = TabularPolicy::uniform(mdp.n_states, n_a);
    let mut v_old: Option<Vec<f64>> = None;
    for _ in 0..10_000 {
        let eval = soft_policy_eval(mdp, &pi, alpha)?;
        if let Some(old) = &v_old {
            let change = old
                .iter()
                .zip(&eval.v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change <= tol {
                return Ok(pi);
            }
        }
        pi = improve(&eval, mdp.n_states, n_a, alpha);
        v_old = Some(eval.v);
    }
    Err(TabularError::NotConverged {
        sweeps: 10_000,
        residual: f64::NAN,
    })
}

fn improve(eval: &Evaluation, n_s: usize, n_a: usize, alpha: f64) -> TabularPolicy {
    if alpha > 0.0 {
        let logits: Vec<f64> = eval.q.iter().map(|q| q / alpha).collect();
        return TabularPolicy::softmax_rows(n_s, n_a, &logits);
    }
    let mut probs = vec![0.0; n_s * n_a];
    for s in 0..n_s {
        let q = eval.q_row(s);
        let best = (0..n_a).fold(0, |b, a| if q[a] > q[b] { a } else { b });
        probs[s * n_a + best] = 1.0;
    }
    TabularPolicy {
        n_states: n_s,
        n_actions: n_a,
        probs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundId {
    /// Guidance under an approximate soft critic.
    GuidanceSoft,
    /// Staying close to guidance, soft values.
    ImprovementSoft,
    GuidanceHard,
    ImprovementHard,
}

impl BoundId {
    pub fn name(self) -> &'static str {
        match self {
            BoundId::GuidanceSoft => "guidance_soft",
            BoundId::ImprovementSoft => "improvement_soft",
            BoundId::GuidanceHard => "guidance_hard",
            BoundId::ImprovementHard => "improvement_hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound_id: BoundId,
    pub epsilon: f64,
    /// Max over states of KL(new || guidance) in bits; 0 for the guidance bounds.
    pub delta: f64,
    /// Set when the new policy leaves the guidance support.
    pub kl_infinite: bool,
    pub bound_rhs: Vec<f64>,
    pub actual_lhs: Vec<f64>,
    pub min_margin: f64,
    pub holds: bool,
}

impl BoundReport {
    fn new(
        bound_id: BoundId,
        epsilon: f64,
        delta: f64,
        kl_infinite: bool,
        bound_rhs: Vec<f64>,
        actual_lhs: Vec<f64>,
    ) -> Self {
        let min_margin = actual_lhs
            .iter()
            .zip(&bound_rhs)
            .map(|(l, r)| l - r)
            .fold(f64::INFINITY, f64::min);
        Self {
            bound_id,
            epsilon,
            delta,
            kl_infinite,
            bound_rhs,
            actual_lhs,
            min_margin,
            holds: min_margin >= -MARGIN_TOLERANCE,
        }
    }
}

/// Random perturbation with sup-norm at most `epsilon`. Even draws use
/// corners (every entry `+-epsilon`), odd draws are uniform in the box.
pub fn random_perturbation<R: Rng + ?Sized>(len: usize, epsilon: f64, corner: bool, rng: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if corner {
                if rng.gen_bool(0.5) {
                    epsilon
                } else {
                    -epsilon
                }
            } else {
                rng.gen_range(-1.0..=1.0) * epsilon
            }
        })
        .collect()
}

/// Checks `V_guidance >= V_target - 2 eps / (1 - gamma)` for random critic
/// perturbations; `alpha = 0` gives the hard-value variant.
pub fn verify_guidance_bound<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    sources: &[TabularPolicy],
    target: &TabularPolicy,
    alpha: f64,
    epsilon: f64,
    n_random_perturbations: usize,
    rng: &mut R,
) -> Result<BoundReport, TabularError> {
    let id = if alpha == 0.0 { BoundId::GuidanceHard } else { BoundId::GuidanceSoft };
    let v_target = soft_policy_eval(mdp, target, alpha)?.v;
    let slack = 2.0 * epsilon / (1.0 - mdp.gamma);
    let rhs: Vec<f64> = v_target.iter().map(|v| v - slack).collect();
    let mut worst: Option<BoundReport> = None;
    for k in 0..n_random_perturbations.max(1) {
        let pert = random_perturbation(mdp.n_states * mdp.n_actions, epsilon, k % 2 == 0, rng);
        let g = form_guidance_exact(mdp, sources, target, alpha, &pert)?;
        let v_g = soft_policy_eval(mdp, &g.policy, alpha)?.v;
        let report = BoundReport::new(id, epsilon, 0.0, false, rhs.clone(), v_g);
        if worst.as_ref().map_or(true, |w| report.min_margin < w.min_margin) {
            worst = Some(report);
        }
    }
    Ok(worst.expect("at least one perturbation"))
}

/// KL(p || q) in bits at each state; `None` where `p` leaves `q`'s support.
pub fn kl_bits(p: &TabularPolicy, q: &TabularPolicy, s: usize) -> Option<f64> {
    let mut total = 0.0;
    for (&a, &b) in p.row(s).iter().zip(q.row(s)) {
        if a > 0.0 {
            if b <= 0.0 {
                return None;
            }
            total += a * (a / b).log2();
        }
    }
    Some(total.max(0.0))
}

/// Checks
/// `V_new >= V_t - sqrt(2 ln2 delta) (R + alpha H_new) / (1-gamma)^2 - (2 eps + alpha dH) / (1-gamma)`
/// where `delta` is the largest KL(new || guidance) in bits, `R` the largest
/// absolute reward, `H_new` the largest entropy of the new policy and `dH` the
/// largest entropy change from `target_t`. `alpha = 0` is the hard variant.
pub fn verify_improvement_bound(
    mdp: &TabularMdp,
    target_t: &TabularPolicy,
    guidance: &ExactGuidance,
    target_t1: &TabularPolicy,
    alpha: f64,
) -> Result<BoundReport, TabularError> {
    let id = if alpha == 0.0 { BoundId::ImprovementHard } else { BoundId::ImprovementSoft };
    target_t1.check(mdp)?;
    let n = mdp.n_states;
    let mut delta = 0.0f64;
    let mut infinite = false;
    for s in 0..n {
        match kl_bits(target_t1, &guidance.policy, s) {
            Some(d) => delta = delta.max(d),
            None => infinite = true,
        }
    }
    let v_t = soft_policy_eval(mdp, target_t, alpha)?.v;
    let v_t1 = soft_policy_eval(mdp, target_t1, alpha)?.v;
    let r_max = mdp.r_max;
    let h_new = (0..n).map(|s| target_t1.entropy(s)).fold(0.0, f64::max);
    let h_diff = (0..n)
        .map(|s| (target_t.entropy(s) - target_t1.entropy(s)).abs())
        .fold(0.0, f64::max);
    let g = 1.0 - mdp.gamma;
    let rhs: Vec<f64> = if infinite {
        vec![f64::NEG_INFINITY; n]
    } else {
        let shift = (2.0 * std::f64::consts::LN_2 * delta).sqrt() * (r_max + alpha * h_new) / (g * g)
            + (2.0 * guidance.epsilon + alpha * h_diff) / g;
        v_t.iter().map(|v| v - shift).collect()
    };
    Ok(BoundReport::new(
        id,
        guidance.epsilon,
        if infinite { f64::INFINITY } else { delta },
        infinite,
        rhs,
        v_t1,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub bound_id: BoundId,
    pub instances: usize,
    pub min_margin: f64,
    pub failures: usize,
    pub infinite_kl: usize,
}

impl CampaignSummary {
    fn new(bound_id: BoundId) -> Self {
        Self {
            bound_id,
            instances: 0,
            min_margin: f64::INFINITY,
            failures: 0,
            infinite_kl: 0,
        }
    }

    fn add(&mut self, r: &BoundReport) {
        self.instances += 1;
        self.min_margin = self.min_margin.min(r.min_margin);
        self.failures += usize::from(!r.holds);
        self.infinite_kl += usize::from(r.kl_infinite);
    }

    pub fn holds(&self) -> bool {
        self.failures == 0 && self.instances > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub n_mdps: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub n_sources: usize,
    pub epsilons: Vec<f64>,
    pub n_perturbations: usize,
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            n_mdps: 100,
            n_states: 6,
            n_actions: 3,
            gamma: 0.9,
            n_sources: 3,
            epsilons: vec![0.0, 0.01, 0.1],
            n_perturbations: 5,
            lambdas: vec![0.01, 0.1],
            alpha: 0.2,
            seed: 0,
        }
    }
}

struct Instance {
    mdp: TabularMdp,
    target: TabularPolicy,
    sources: Vec<TabularPolicy>,
    rng: ChaCha8Rng,
}

fn instance(cfg: &CampaignConfig, index: usize) -> Result<Instance, TabularError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mdp = make_chain_mdp(cfg.n_states, cfg.n_actions, cfg.gamma, &mut rng)
        .map_err(|e| TabularError::Dimension(e.to_string()))?;
    let target = TabularPolicy::random_softmax(cfg.n_states, cfg.n_actions, 1.0, &mut rng);
    let sources = (0..cfg.n_sources)
        .map(|_| TabularPolicy::random_softmax(cfg.n_states, cfg.n_actions, 1.0, &mut rng))
        .collect();
    Ok(Instance {
        mdp,
        target,
        sources,
        rng,
    })
}

/// Soft and hard guidance bounds over random MDPs, sources and perturbations.
pub fn guidance_campaign(cfg: &CampaignConfig) -> Result<[CampaignSummary; 2], TabularError> {
    let mut soft = CampaignSummary::new(BoundId::GuidanceSoft);
    let mut hard = CampaignSummary::new(BoundId::GuidanceHard);
    for i in 0..cfg.n_mdps {
        let mut inst = instance(cfg, i)?;
        for &eps in &cfg.epsilons {
            for (alpha, summary) in [(cfg.alpha, &mut soft), (0.0, &mut hard)] {
                let r = verify_guidance_bound(
                    &inst.mdp,
                    &inst.sources,
                    &inst.target,
                    alpha,
                    eps,
                    cfg.n_perturbations,
                    &mut inst.rng,
                )?;
                summary.add(&r);
            }
        }
    }
    Ok([soft, hard])
}

/// Soft and hard closeness bounds with new policies mixed from guidance and
/// uniform.
pub fn improvement_campaign(cfg: &CampaignConfig) -> Result<[CampaignSummary; 2], TabularError> {
    let mut soft = CampaignSummary::new(BoundId::ImprovementSoft);
    let mut hard = CampaignSummary::new(BoundId::ImprovementHard);
    let uniform = TabularPolicy::uniform(cfg.n_states, cfg.n_actions);
    for i in 0..cfg.n_mdps {
        let mut inst = instance(cfg, i)?;
        for &eps in &cfg.epsilons {
            for (alpha, summary) in [(cfg.alpha, &mut soft), (0.0, &mut hard)] {
                let pert = random_perturbation(cfg.n_states * cfg.n_actions, eps, true, &mut inst.rng);
                let g = form_guidance_exact(&inst.mdp, &inst.sources, &inst.target, alpha, &pert)?;
                for &lambda in &cfg.lambdas {
                    let t1 = TabularPolicy::mixture(&g.policy, &uniform, lambda)?;
                    let r = verify_improvement_bound(&inst.mdp, &inst.target, &g, &t1, alpha)?;
                    summary.add(&r);
                }
            }
        }
    }
    Ok([soft, hard])
}

/// Largest identity error over `n` random `(mdp, pi, pi')` triples.
pub fn performance_difference_campaign(cfg: &CampaignConfig, n: usize) -> Result<f64, TabularError> {
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut inst = instance(cfg, i)?;
        let other = TabularPolicy::random_softmax(cfg.n_states, cfg.n_actions, 1.0, &mut inst.rng);
        for alpha in [cfg.alpha, 0.0] {
            worst = worst.max(performance_difference_error(&inst.mdp, &inst.target, &other, alpha)?);
        }
    }
    Ok(worst)
}
