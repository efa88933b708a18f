use cup_core::cup::*;
use cup_core::distributions::GaussianHead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn head(m: f64, ls: f64) -> GaussianHead {
    GaussianHead::new(vec![m], vec![ls])
}

#[test]
fn constant_critic_zero_alpha() {
    let c = FnCritic(|_: &[f64], _: &[f64]| 4.25);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in [1, 3, 17] {
        let v = estimate_soft_value(&head(0.3, -0.5), &c, &[0.0], 0.0, k, &mut rng);
        assert_eq!(v, 4.25);
    }
}

#[test]
fn no_sources_choose_target() {
    let c = FnCritic(|_: &[f64], a: &[f64]| a[0]);
    let t = head(0.1, 0.0);
    let g = form_guidance(
        CandidateSet { source_heads: &[], target_head: &t },
        &c,
        &[0.0],
        0.2,
        &CupConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    assert_eq!(g.chosen_index, 0);
    assert!(g.target_chosen());
    assert_eq!(g.expected_advantage, 0.0);
    assert_eq!(adaptive_weight(&g, &CupConfig::default()), 0.0);
}

#[test]
fn equal_estimates_break_toward_target() {
    // deterministic-looking critic and identical heads give equal values
    let c = FnCritic(|_: &[f64], _: &[f64]| 1.0);
    let t = head(0.2, -1.0);
    let sources = [t.clone()];
    let g = form_guidance(
        CandidateSet { source_heads: &sources, target_head: &t },
        &c,
        &[0.0],
        0.0,
        &CupConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(2),
    );
    assert!(g.target_chosen());
    assert_eq!(g.expected_advantage, 0.0);
}

#[test]
fn weight_examples() {
    let cfg = CupConfig::default();
    let mk = |ea: f64, v: f64| GuidanceChoice {
        chosen_index: 0,
        chosen_head: head(0.0, 0.0),
        expected_advantage: ea,
        target_value_estimate: v,
        candidate_values: vec![v + ea, v],
    };
    assert!((adaptive_weight(&mk(10.0, 100.0), &cfg) - 9.0).abs() < 1e-12);
    assert!((adaptive_weight(&mk(0.1, 1000.0), &cfg) - 3.0).abs() < 1e-12);
    assert!((adaptive_weight(&mk(0.1, -1000.0), &cfg) - 3.0).abs() < 1e-12);
    assert_eq!(adaptive_weight(&mk(0.0, 50.0), &cfg), 0.0);
}

#[test]
fn stats_fractions() {
    let mk = |i: usize| GuidanceChoice {
        chosen_index: i,
        chosen_head: head(0.0, 0.0),
        expected_advantage: 0.0,
        target_value_estimate: 0.0,
        candidate_values: vec![0.0, 0.0],
    };
    let alt: Vec<_> = (0..10).map(|i| mk(i % 2)).collect();
    let s = StepStats::from_choices(&alt, &[0.0; 10]);
    assert_eq!(s.fractions(), vec![0.5, 0.5]);
    let all: Vec<_> = (0..7).map(|_| mk(1)).collect();
    let s = StepStats::from_choices(&all, &[0.0; 7]);
    assert_eq!(s.fractions(), vec![0.0, 1.0]);
}

#[test]
fn csv_layout() {
    let mut st = SelectionStats::default();
    assert!(st.write_csv(Vec::new()).is_err());
    let mut s = StepStats::new(2);
    s.selected = vec![1, 3];
    s.states = 4;
    st.push(7, s);
    let mut buf = Vec::new();
    st.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "7,0,0.25,0,0");
    assert_eq!(lines[2], "7,1,0.75,0,0");
}
