use cup_core::tabular::*;
use cup_core::envs::TabularMdp;

fn one_state(r: f64, gamma: f64) -> TabularMdp {
    TabularMdp::new(1, 1, vec![r], vec![1.0], gamma).unwrap()
}

#[test]
fn single_state_geometric_value() {
    let mdp = one_state(1.0, 0.5);
    let pi = TabularPolicy::uniform(1, 1);
    let e = soft_policy_eval(&mdp, &pi, 0.0).unwrap();
    assert!((e.v[0] - 2.0).abs() <= 1e-12);
}

#[test]
fn policy_validation() {
    assert!(TabularPolicy::new(1, 2, vec![0.5, 0.6]).is_err());
    assert!(TabularPolicy::new(1, 2, vec![1.5, -0.5]).is_err());
    assert!(TabularPolicy::new(1, 2, vec![0.25, 0.75]).is_ok());
}

#[test]
fn entropy_handles_zero_mass() {
    let p = TabularPolicy::new(1, 3, vec![0.0, 0.5, 0.5]).unwrap();
    assert!((p.entropy(0) - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn kl_bits_support() {
    let p = TabularPolicy::new(1, 2, vec![0.5, 0.5]).unwrap();
    let q = TabularPolicy::new(1, 2, vec![1.0, 0.0]).unwrap();
    assert_eq!(kl_bits(&p, &q, 0), None);
    assert_eq!(kl_bits(&q, &p, 0), Some(1.0));
}
