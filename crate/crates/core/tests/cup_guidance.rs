use cup_core::cup::*;
use cup_core::distributions::{log_one_minus_tanh_sq, GaussianHead};
use cup_core::sac::{Batch, SacAgent, SacConfig};
use cup_core::tensor::{grad_check, Matrix};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q_smooth(a: f64) -> f64 {
    (2.0 * a).sin() + a * a
}

/// Trapezoid rule for `E_u[f(u)]`, `u ~ N(mu, sigma^2)`, over mu +- 12 sigma.
fn gauss_expect(mu: f64, sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 200_000;
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let u = lo + i as f64 * h;
        let z = (u - mu) / sigma;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += w * f(u) * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    }
    total * h
}

#[test]
fn soft_value_estimate_converges_to_quadrature() {
    let (mu, log_std): (f64, f64) = (0.3, -0.4);
    let sigma = log_std.exp();
    let head = GaussianHead::new(vec![mu], vec![log_std]);
    // integrand written directly in pre-squash coordinates
    let f = |u: f64| {
        let z = (u - mu) / sigma;
        let log_pi = -0.5 * z * z - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - log_one_minus_tanh_sq(u);
        q_smooth(u.tanh()) - log_pi
    };
    let mean = gauss_expect(mu, sigma, f);
    let var = gauss_expect(mu, sigma, |u| f(u).powi(2)) - mean * mean;
    let k = 200_000;
    let critic = FnCritic(|_: &[f64], a: &[f64]| q_smooth(a[0]));
    let est = estimate_soft_value(&head, &critic, &[0.0], 1.0, k, &mut ChaCha8Rng::seed_from_u64(3));
    let se = (var / k as f64).sqrt();
    assert!((est - mean).abs() <= 3.0 * se, "est {est} quad {mean} se {se}");
}

#[test]
fn default_sample_count() {
    assert_eq!(CupConfig::default().n_advantage_samples, 3);
    assert_eq!(CupConfig::default().beta1, 30.0);
    assert_eq!(CupConfig::default().beta2, 3e-3);
}

#[test]
fn dominant_source_matches_brute_force() {
    // Q peaks at a = 0.8; source 1 sits there, source 0 and the target do not
    let critic = FnCritic(|_: &[f64], a: &[f64]| -(a[0] - 0.8).powi(2) * 10.0);
    let sources = [
        GaussianHead::new(vec![-0.5], vec![-1.0]),
        GaussianHead::new(vec![0.8f64.atanh()], vec![-3.0]),
    ];
    let target = GaussianHead::new(vec![-1.0], vec![-1.0]);
    let cfg = CupConfig::default();
    let alpha = 0.05;
    let state = [0.1, 0.2];
    let rng = ChaCha8Rng::seed_from_u64(11);
    let g = form_guidance(
        CandidateSet { source_heads: &sources, target_head: &target },
        &critic,
        &state,
        alpha,
        &cfg,
        &mut rng.clone(),
    );
    // exhaustive evaluation with the same sample sets, candidate by candidate
    let mut brute_rng = rng;
    let values: Vec<f64> = [&sources[0], &sources[1], &target]
        .iter()
        .map(|h| estimate_soft_value(h, &critic, &state, alpha, cfg.n_advantage_samples, &mut brute_rng))
        .collect();
    assert_eq!(g.candidate_values, values);
    let best = (0..3).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    assert_eq!(best, 1);
    assert_eq!(g.chosen_index, 1);
    assert_eq!(g.chosen_head, sources[1]);
    assert_eq!(g.expected_advantage, values[1] - values[2]);
    assert_eq!(g.target_value_estimate, values[2]);
}

#[test]
fn identical_source_has_zero_mean_advantage() {
    let critic = FnCritic(|_: &[f64], a: &[f64]| q_smooth(a[0]));
    let target = GaussianHead::new(vec![0.2], vec![-0.5]);
    let sources = [target.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let mut diffs = Vec::with_capacity(n);
    for _ in 0..n {
        let g = form_guidance(
            CandidateSet { source_heads: &sources, target_head: &target },
            &critic,
            &[0.0],
            0.3,
            &CupConfig::default(),
            &mut rng,
        );
        diffs.push(g.candidate_values[0] - g.candidate_values[1]);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!(mean.abs() <= 3.0 * sd / (n as f64).sqrt(), "mean {mean} sd {sd}");
}

fn random_head<R: Rng>(rng: &mut R, d: usize) -> GaussianHead {
    GaussianHead::new(
        (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        (0..d).map(|_| rng.gen_range(-2.0..0.5)).collect(),
    )
}

#[test]
fn batched_guidance_equals_row_by_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let critic = FnCritic(|s: &[f64], a: &[f64]| s[0] * a[0] - (a[1] - s[1]).powi(2));
    let b = 7;
    let states = Matrix::from_vec(b, 2, (0..2 * b).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let targets: Vec<_> = (0..b).map(|_| random_head(&mut rng, 2)).collect();
    let sources: Vec<Vec<_>> = (0..b)
        .map(|_| (0..3).map(|_| random_head(&mut rng, 2)).collect())
        .collect();
    let cfg = CupConfig::default();
    let batched = form_guidance_batch(&states, &targets, &sources, &critic, 0.2, &cfg, &mut rng.clone());
    let mut seq_rng = rng;
    for i in 0..b {
        let g = form_guidance(
            CandidateSet { source_heads: &sources[i], target_head: &targets[i] },
            &critic,
            states.row(i),
            0.2,
            &cfg,
            &mut seq_rng,
        );
        assert_eq!(g, batched[i]);
    }
}

fn agent_and_batch(seed: u64, n_sources: usize, b: usize) -> (SacAgent, Batch) {
    let cfg = SacConfig {
        hidden: vec![8, 8],
        ..SacConfig::new(3, 2)
    };
    let agent = SacAgent::new(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let mut mat = |rows: usize, cols: usize, lo: f64, hi: f64| {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    };
    let states = mat(b, 3, -1.0, 1.0);
    let actions = mat(b, 2, -0.9, 0.9);
    let next_states = mat(b, 3, -1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2000);
    let batch = Batch {
        states,
        actions,
        rewards: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        next_states,
        dones: (0..b).map(|_| rng.gen_bool(0.2)).collect(),
        source_heads: (0..b)
            .map(|_| (0..n_sources).map(|_| random_head(&mut rng, 2)).collect())
            .collect(),
    };
    (agent, batch)
}

#[test]
fn zero_sources_reduce_to_actor_loss() {
    let (mut agent, batch) = agent_and_batch(1, 0, 9);
    let noise = agent.standard_normal(9);
    let plain = agent.actor_loss(&batch, &noise).unwrap();
    let cup = cup_actor_loss(&agent, &batch, &CupConfig::default(), 1_000_000, &noise, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(cup.loss, plain);
    assert!(cup.weights.iter().all(|w| *w == 0.0));
}

#[test]
fn penalty_is_off_before_onset() {
    let (mut agent, batch) = agent_and_batch(2, 2, 9);
    let noise = agent.standard_normal(9);
    let plain = agent.actor_loss(&batch, &noise).unwrap();
    let cfg = CupConfig::default();
    let early = cup_actor_loss(&agent, &batch, &cfg, cfg.regularization_start_step - 1, &noise, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(early.loss, plain);
    // guidance is still formed for the statistics
    assert_eq!(early.choices.len(), 9);
}

#[test]
fn cup_gradient_matches_finite_differences() {
    let cfg = CupConfig {
        beta2: 10.0,
        ..CupConfig::default()
    };
    let mut checked = 0;
    for seed in 0..10 {
        let (mut agent, batch) = agent_and_batch(100 + seed, 3, 6);
        agent.log_alpha = 0.1f64.ln();
        let noise = agent.standard_normal(6);
        let mut g_rng = ChaCha8Rng::seed_from_u64(seed);
        let (choices, weights) = guidance_for_batch(&agent, &batch, &cfg, &mut g_rng).unwrap();
        if weights.iter().all(|w| *w == 0.0) {
            continue;
        }
        checked += 1;
        let reg = GuidanceRegularizer {
            weights,
            heads: choices.iter().map(|c| c.chosen_head.clone()).collect(),
        };
        let out = agent.actor_loss_with(&batch.states, &noise, Some(&reg)).unwrap();
        assert!(out.regularizer > 0.0);
        let mut probe = agent.clone();
        let err = grad_check(
            |v| {
                probe.actor.values_mut().copy_from_slice(v);
                probe.actor_loss_with(&batch.states, &noise, Some(&reg)).unwrap().loss
            },
            agent.actor.values(),
            out.grad.values(),
            1e-6,
        );
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
    assert!(checked >= 5, "only {checked} batches had an active penalty");
}

#[test]
fn no_sources_train_exactly_like_sac() {
    let (agent, batch) = agent_and_batch(3, 0, 16);
    let mut sac = agent.clone();
    let mut cup = agent;
    let mut g_rng = ChaCha8Rng::seed_from_u64(9);
    for step in 0..20 {
        let a = sac.train_step(&batch).unwrap();
        let b = cup_train_step(&mut cup, &batch, &CupConfig::default(), 10_000 + step, &mut g_rng).unwrap();
        assert_eq!(a, b.metrics);
    }
    assert_eq!(sac.actor, cup.actor);
    assert_eq!(sac.critics, cup.critics);
    assert_eq!(sac.log_alpha.to_bits(), cup.log_alpha.to_bits());
}

#[test]
fn training_with_sources_keeps_source_heads_fixed() {
    let (mut agent, batch) = agent_and_batch(4, 2, 16);
    let before = batch.source_heads.clone();
    let mut g_rng = ChaCha8Rng::seed_from_u64(1);
    for step in 0..10 {
        let r = cup_train_step(&mut agent, &batch, &CupConfig::default(), 6_000 + step, &mut g_rng).unwrap();
        check_guidance(&r.choices, &r.weights, &CupConfig::default()).unwrap();
        let f: f64 = r.stats.fractions().iter().sum();
        assert!((f - 1.0).abs() <= 1e-9);
    }
    assert_eq!(batch.source_heads, before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_moves_every_estimate_by_the_constant(seed in 0u64..100_000, c in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sources: Vec<_> = (0..3).map(|_| random_head(&mut rng, 2)).collect();
        let target = random_head(&mut rng, 2);
        let base = FnCritic(|s: &[f64], a: &[f64]| (a[0] * 3.0).sin() + s[0] * a[1]);
        let shifted = FnCritic(move |s: &[f64], a: &[f64]| (a[0] * 3.0).sin() + s[0] * a[1] + c);
        let set = CandidateSet { source_heads: &sources, target_head: &target };
        let cfg = CupConfig::default();
        let g0 = form_guidance(set, &base, &[0.4], 0.2, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let g1 = form_guidance(set, &shifted, &[0.4], 0.2, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        for (a, b) in g0.candidate_values.iter().zip(&g1.candidate_values) {
            prop_assert!((b - a - c).abs() <= 1e-12 * (1.0 + c + a.abs()));
        }
        prop_assert_eq!(g0.chosen_index, g1.chosen_index);
    }

    #[test]
    fn guidance_invariants_on_random_batches(seed in 0u64..100_000, n_sources in 0usize..4) {
        let (agent, batch) = agent_and_batch(seed, n_sources, 12);
        let cfg = CupConfig { beta2: 0.5, ..CupConfig::default() };
        let (choices, weights) = guidance_for_batch(&agent, &batch, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(check_guidance(&choices, &weights, &cfg).is_ok());
        for (c, w) in choices.iter().zip(&weights) {
            prop_assert!(c.candidate_values.iter().all(|v| *v <= c.candidate_values[c.chosen_index]));
            if c.target_chosen() {
                prop_assert_eq!(*w, 0.0);
                prop_assert_eq!(c.expected_advantage, 0.0);
            }
            prop_assert!(*w <= cfg.beta1 * (cfg.beta2 * c.target_value_estimate.abs()));
        }
        let stats = StepStats::from_choices(&choices, &weights);
        prop_assert!((stats.fractions().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}
