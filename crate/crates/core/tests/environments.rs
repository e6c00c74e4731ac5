use proptest::prelude::*;
use rand::Rng;

use smpo::approx::PolicyFunction;
use smpo::cmdp::{
    enumerate_trajectories, episode_metrics, rollout_episode, Action, ActionSpace, Environment, FiniteCmdp, HazardGrid,
    PointHazard, TablePolicy, TabularEnv,
};
use smpo::seeding::{rng, Stream};

fn random_action(space: ActionSpace, r: &mut impl Rng) -> Action {
    match space {
        ActionSpace::Discrete(n) => Action::Discrete(r.random_range(0..n)),
        ActionSpace::Continuous { dim, .. } => {
            Action::Continuous((0..dim).map(|_| r.random_range(-1.5..1.5)).collect())
        }
    }
}

fn check_signals(mut env: Box<dyn Environment>, steps: usize) {
    let spec = env.spec();
    let mut r = rng(5, Stream::Check, &[]);
    env.reset(0);
    let mut t = 0;
    for i in 0..steps {
        let out = env.step(&random_action(spec.action_space, &mut r)).unwrap();
        assert!(out.reward >= 0.0, "negative reward {}", out.reward);
        assert!(out.cost == 0.0 || out.cost == 1.0, "cost {}", out.cost);
        t += 1;
        if out.terminal || t == spec.max_episode_steps {
            env.reset(i as u64);
            t = 0;
        }
    }
}

#[test]
fn built_in_rewards_are_non_negative_and_costs_binary() {
    check_signals(
        Box::new(TabularEnv::new(HazardGrid::default(), 50, 0.99).unwrap()),
        100_000,
    );
    check_signals(Box::new(PointHazard::new(Default::default()).unwrap()), 100_000);
}

/// Start in 0; action 1 costs 1 and may end the episode from state 1.
fn tiny() -> FiniteCmdp {
    FiniteCmdp::new(
        vec![vec![0, 1], vec![0, 2], vec![2, 2]],
        vec![vec![1.0, 0.0], vec![0.5, 4.0], vec![0.0, 0.0]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]],
        vec![vec![false, false], vec![false, true], vec![true, true]],
        0,
    )
    .unwrap()
}

#[test]
fn enumeration_matches_sampling() {
    let model = tiny();
    let policy = TablePolicy::new(vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
    let (gamma, horizon) = (0.9, 6);
    let paths = enumerate_trajectories(&model, &policy, horizon, gamma).unwrap();
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() <= 1e-12);
    let exact: f64 = paths.iter().map(|(t, p)| p * t.episode_reward_discounted).sum();

    let mut env = TabularEnv::new(model, horizon, gamma).unwrap();
    let n = 100_000;
    let mut r = rng(8, Stream::Check, &[]);
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            rollout_episode(&mut env, &policy, &mut r, horizon)
                .unwrap()
                .episode_reward_discounted
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "sampled {mean} vs exact {exact} (se {se})"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_agree_with_transition_sums(seed in any::<u64>(), gamma in 0.5f64..0.999) {
        let mut env = PointHazard::new(Default::default()).unwrap();
        let spec = env.spec();
        let policy = PolicyFunction::new(spec.observation_dim, &[8], spec.action_space, seed);
        let mut r = rng(seed, Stream::Episode, &[0]);
        let traj = rollout_episode(&mut env, &policy, &mut r, 60).unwrap();
        let m = episode_metrics(&traj, gamma).unwrap();
        let mut direct = 0.0;
        for (t, step) in traj.transitions.iter().enumerate() {
            direct += gamma.powi(t as i32) * step.cost;
        }
        prop_assert!((m.discounted_cost - direct).abs() <= 1e-12 * (1.0 + direct));
        prop_assert_eq!(m.undiscounted_cost, traj.episode_cost_undiscounted);
    }

    #[test]
    fn rollouts_are_reproducible(seed in any::<u64>()) {
        let run = || {
            let mut env = PointHazard::new(Default::default()).unwrap();
            let spec = env.spec();
            let policy = PolicyFunction::new(spec.observation_dim, &[8], spec.action_space, 3);
            rollout_episode(&mut env, &policy, &mut rng(seed, Stream::Episode, &[1]), 40).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}
