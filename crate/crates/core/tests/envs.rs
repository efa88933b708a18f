use cup_core::envs::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reset_is_deterministic_per_stream() {
    let spec = TaskSpec::preset(TaskKind::Reach, 200, 0);
    let a = reset(&spec, &mut ChaCha8Rng::seed_from_u64(4));
    let b = reset(&spec, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(a, b);
    assert_eq!(a.step_index, 0);
    assert_eq!(a.velocity, [0.0, 0.0]);
    assert_eq!(a.position, spec.start);
}

#[test]
fn point_goal_sampler_is_degenerate() {
    let mut spec = TaskSpec::preset(TaskKind::Reach, 200, 0);
    spec.goal_sampler = GoalSampler::Point([0.25, 0.5]);
    let s = reset(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(s.goal, [0.25, 0.5]);
}

#[test]
fn random_goal_statistics() {
    let spec = TaskSpec::preset(TaskKind::RandomGoalReach, 200, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    let mut sum = [0.0; 2];
    for _ in 0..n {
        let g = reset(&spec, &mut rng).goal;
        sum[0] += g[0];
        sum[1] += g[1];
    }
    let GoalSampler::UniformBox { low, high } = spec.goal_sampler else {
        unreachable!()
    };
    let mean = spec.goal_sampler.mean();
    for i in 0..2 {
        let se = (high[i] - low[i]) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((sum[i] / n as f64 - mean[i]).abs() < 3.0 * se);
    }
}

#[test]
fn zero_action_is_fixed_point() {
    let spec = TaskSpec::preset(TaskKind::Reach, 200, 0);
    let s = PointMassState {
        position: [0.1, -0.2],
        velocity: [0.0, 0.0],
        goal: [0.4, 0.2],
        step_index: 3,
    };
    let out = step(&s, &[0.0, 0.0], &spec);
    assert_eq!(out.next.position, s.position);
    assert_eq!(out.reward, -s.distance_to_goal());
    assert!(!out.done && !out.success);
}

#[test]
fn bonus_at_goal() {
    let spec = TaskSpec::preset(TaskKind::Reach, 200, 0);
    let s = PointMassState {
        position: [0.3, 0.3],
        velocity: [0.0, 0.0],
        goal: [0.3, 0.3],
        step_index: 0,
    };
    let out = step(&s, &[0.1, -0.1], &spec);
    assert!(out.success);
    assert!(out.reward >= SUCCESS_BONUS - SUCCESS_RADIUS);
}

#[test]
fn horizon_ends_episode() {
    let spec = TaskSpec::preset(TaskKind::Reach, 3, 0);
    let mut s = reset(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    let mut dones = vec![];
    for _ in 0..3 {
        let out = step(&s, &[0.0, 0.0], &spec);
        dones.push(out.done);
        s = out.next;
    }
    assert_eq!(dones, vec![false, false, true]);
    assert_eq!(s.step_index, 3);
}

#[test]
fn wall_blocks_every_approach_angle() {
    let spec = TaskSpec::preset(TaskKind::ReachWall, 200, 0);
    let wall = spec.wall.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        // aim at a random point on the wall from a random point below it
        let target_t: f64 = rng.gen_range(0.05..0.95);
        let target = [
            wall.a[0] + target_t * (wall.b[0] - wall.a[0]),
            wall.a[1] + target_t * (wall.b[1] - wall.a[1]),
        ];
        let angle: f64 = rng.gen_range(0.2..std::f64::consts::PI - 0.2);
        let dist: f64 = rng.gen_range(0.1..0.5);
        let start = [target[0] - dist * angle.cos(), target[1] - dist * angle.sin()];
        let dir = [target[0] - start[0], target[1] - start[1]];
        let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let action = [dir[0] / n, dir[1] / n];
        let side = wall.side(start);
        let mut s = PointMassState {
            position: start,
            velocity: [0.0, 0.0],
            goal: [0.0, 0.5],
            step_index: 0,
        };
        let mut hit = false;
        for _ in 0..60 {
            let out = step(&s, &action, &spec);
            hit |= out.next.velocity == [0.0, 0.0];
            s = out.next;
            assert_eq!(wall.side(s.position), side, "crossed the wall from {start:?}");
        }
        assert!(hit);
    }
}

#[test]
fn state_stays_in_bounds_under_random_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for kind in [TaskKind::Reach, TaskKind::ReachWall] {
        let spec = TaskSpec::preset(kind, 200, 0);
        let mut s = reset(&spec, &mut rng);
        for _ in 0..50_000 {
            let a = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let out = step(&s, &a, &spec);
            s = out.next;
            assert!(s.position.iter().all(|p| p.abs() <= 1.0));
            assert!(s.velocity.iter().all(|v| v.abs() <= spec.v_max));
            assert!(s.step_index <= spec.horizon);
            if out.done {
                s = reset(&spec, &mut rng);
            }
        }
    }
}

#[test]
fn step_is_pure() {
    let spec = TaskSpec::preset(TaskKind::ReachWall, 200, 0);
    let s = reset(&spec, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(step(&s, &[0.3, 0.9], &spec), step(&s, &[0.3, 0.9], &spec));
}

#[test]
fn spec_validation() {
    let mut spec = TaskSpec::preset(TaskKind::Reach, 200, 0);
    assert!(spec.validate().is_ok());
    spec.wall = TaskSpec::preset(TaskKind::ReachWall, 200, 0).wall;
    assert!(spec.validate().is_err());
    let mut spec = TaskSpec::preset(TaskKind::ReachWall, 200, 0);
    assert!(spec.validate().is_ok());
    spec.horizon = 0;
    assert!(spec.validate().is_err());
}

#[test]
fn chain_mdp_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mdp = make_chain_mdp(6, 3, 0.9, &mut rng).unwrap();
    for s in 0..6 {
        for a in 0..3 {
            let row = mdp.next_state_probs(s, a);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!(mdp.reward(s, a).abs() <= mdp.r_max);
        }
    }
}

#[test]
fn chain_mdp_rejects_single_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(make_chain_mdp(1, 3, 0.9, &mut rng).is_err());
    assert!(make_chain_mdp(3, 1, 0.9, &mut rng).is_err());
}

#[test]
fn chain_mdp_is_deterministic() {
    let a = make_chain_mdp(5, 2, 0.9, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    let b = make_chain_mdp(5, 2, 0.9, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    assert_eq!(a, b);
}
