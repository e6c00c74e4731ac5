//! Built-in verification suites behind `smpo check`.
//!
//! Every check compares a production code path against an independent
//! computation: closed forms, central finite differences, exact trajectory
//! enumeration or dynamic programming.

use std::collections::HashMap;
use std::str::FromStr;

use rand::Rng;

use crate::approx::{finite_difference, max_relative_error, Activation, Mlp, MlpSpec, PolicyFunction};
use crate::baselines::{lagrange_update, LagrangeState};
use crate::cmdp::{
    enumerate_trajectories, rollout_episode, Action, ActionSpace, FiniteCmdp, HazardGrid, StochasticPolicy,
    TablePolicy, TabularEnv, TabularModel, Transition,
};
use crate::critic::{dp_cost_oracle, fit_fixed_policy, CriticConfig, FitSchedule, SafetyCritic};
use crate::modulation::{clip_cost, weight_grad_q, weight_of_total, ModulationConfig};
use crate::seeding::{self, Stream};
use crate::smpo::{exact_policy_gradient, scheduled_threshold, ReturnForm, SmpoConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Weights,
    Gradients,
    Oracle,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weights" => Ok(Suite::Weights),
            "gradients" => Ok(Suite::Gradients),
            "oracle" => Ok(Suite::Oracle),
            other => Err(Error::config(format!(
                "unknown suite {other:?} (expected weights, gradients or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Weights => weights_suite(),
        Suite::Gradients => gradients_suite(),
        Suite::Oracle => oracle_suite(),
    }
}

/// `b^d / (b^d − 1) · (1 − b^(x − d))`, evaluated as written.
fn naive_weight(x: f64, b: f64, d: f64) -> f64 {
    b.powf(d) / (b.powf(d) - 1.0) * (1.0 - b.powf(x - d))
}

fn weights_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    for b in [2.0, 3.0, 4.0] {
        for d in [5.0, 25.0] {
            let cfg = ModulationConfig::new(b, d)?;
            worst = worst
                .max((weight_of_total(0.0, &cfg) - 1.0).abs())
                .max(weight_of_total(d, &cfg).abs());
        }
    }
    out.push(CheckResult::new(
        "anchors f(0)=1, f(d)=0",
        worst <= 1e-12,
        format!("max deviation {worst:.3e}"),
    ));

    let cfg = ModulationConfig::new(3.0, 25.0)?;
    let v = weight_of_total(26.0, &cfg);
    out.push(CheckResult::new(
        "f(d+1) for b=3, d=25",
        (v - (-2.000000000002)).abs() <= 1e-9 && (v - naive_weight(26.0, 3.0, 25.0)).abs() <= 1e-9,
        format!("{v:.15}"),
    ));

    let sched = SmpoConfig {
        threshold: 25.0,
        eta: 2.0,
        e_max: 50,
        ..SmpoConfig::default()
    };
    let d: Vec<f64> = [0, 10, 50, 100]
        .iter()
        .map(|&e| scheduled_threshold(&sched, e))
        .collect();
    out.push(CheckResult::new(
        "threshold schedule at e_p = 0, 10, 50, 100",
        d == [50.0, 45.0, 25.0, 25.0],
        format!("{d:?}"),
    ));

    let s = LagrangeState {
        multiplier: 0.1,
        step: 0.05,
    };
    let up = lagrange_update(s, 15.0, 5.0)?.multiplier;
    let down = lagrange_update(s, 0.0, 5.0)?.multiplier;
    out.push(CheckResult::new(
        "multiplier update",
        (up - 0.6).abs() < 1e-12 && down == 0.0,
        format!("{up} and {down}"),
    ));
    Ok(out)
}

/// Max relative error between the weighting gradient and central differences
/// of the closed form, at `points` totals straddling `d`.
pub fn weight_gradient_error(points: usize, seed: u64) -> Result<f64> {
    let (b, d) = (3.0, 25.0);
    let cfg = ModulationConfig::new(b, d)?;
    let mut rng = seeding::rng(seed, Stream::Check, &[0]);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let total = rng.random_range(d - 6.0..d + 3.0);
        let q = rng.random_range(0.02..0.98) * total.min(d);
        let cum = total - q;
        let h = 1e-5;
        let fd = (naive_weight(cum + q + h, b, d) - naive_weight(cum + q - h, b, d)) / (2.0 * h);
        let g = weight_grad_q(cum, q, &cfg)?;
        worst = worst.max((g - fd).abs() / fd.abs());
    }
    Ok(worst)
}

/// Max relative error of MLP backpropagation against central differences.
pub fn mlp_gradient_error(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = seeding::rng(seed, Stream::Check, &[1]);
    let acts = [Activation::Tanh, Activation::Identity, Activation::Relu];
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let input = rng.random_range(1..5);
        let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..6)).collect();
        let output = rng.random_range(1..4);
        let spec = MlpSpec::new(input, &hidden, output).with_activations(acts[i % 2], acts[i % 3]);
        let params: Vec<f64> = Mlp::init(spec.clone(), rng.random(), 1.0)
            .params()
            .iter()
            .map(|p| p + rng.random_range(-0.1..0.1))
            .collect();
        let net = Mlp::from_params(spec.clone(), params)?;
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = net.backward(&x, &cot)?;
        let numeric = finite_difference(
            |p| {
                let probe = Mlp::from_params(spec.clone(), p.to_vec()).expect("finite params");
                let y = probe.forward(&x).expect("valid input");
                y.iter().zip(&cot).map(|(a, b)| a * b).sum()
            },
            net.params(),
            1e-6,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-4));
    }
    Ok(worst)
}

/// Two states, two actions, mixed costs; small enough to enumerate.
pub fn oracle_cmdp() -> FiniteCmdp {
    FiniteCmdp::new(
        vec![vec![0, 1], vec![0, 1]],
        vec![vec![1.0, 2.0], vec![0.5, 3.0]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        vec![vec![false, false], vec![false, false]],
        0,
    )
    .expect("valid model")
}

/// Modulated objective `Σ_τ P_θ(τ) Σ_t γ^t f(C_t + clip(Q̃_t)) r_t` by enumeration.
///
/// With `critic_dependence`, `Q̃_t = Q(s_t, a_t) + γ Σ_a (π_θ(a|s′) − π_0(a|s′)) Q(s′, a)`
/// carries the critic's first-order dependence on the policy around the
/// reference `base`; otherwise `Q̃_t = Q(s_t, a_t)`.
#[allow(clippy::too_many_arguments)]
pub fn enumerated_objective<M: TabularModel + ?Sized>(
    model: &M,
    policy: &PolicyFunction,
    base: &PolicyFunction,
    critic: &SafetyCritic,
    base_b: f64,
    d_prime: f64,
    discount: f64,
    horizon: usize,
    critic_dependence: bool,
) -> Result<f64> {
    let cfg = ModulationConfig::new(base_b, d_prime)?;
    let mut total = 0.0;
    for (traj, p) in enumerate_trajectories(model, policy, horizon, discount)? {
        let mut g = 1.0;
        let mut value = 0.0;
        for t in &traj.transitions {
            let mut q = critic.predict(&t.state, &t.action)?;
            if critic_dependence && !t.done {
                let now = policy.probabilities(&t.next_state)?;
                let then = base.probabilities(&t.next_state)?;
                let qs = critic.predict_all(&t.next_state)?;
                q += discount * (0..qs.len()).map(|a| (now[a] - then[a]) * qs[a]).sum::<f64>();
            }
            value += g * weight_of_total(t.running_cum_cost + clip_cost(q, d_prime), &cfg) * t.reward;
            g *= discount;
        }
        total += p * value;
    }
    Ok(total)
}

/// A random critic whose values on `model` all sit strictly inside `(0, d)`,
/// so neither the ReLU head nor the clip has a kink at the evaluation point.
pub fn interior_critic<M: TabularModel + ?Sized>(model: &M, d: f64, seed: u64) -> Result<SafetyCritic> {
    let space = ActionSpace::Discrete(model.num_actions());
    let dim = model.observe(0).len();
    for attempt in 0..1000u64 {
        let critic = SafetyCritic::new(dim, &[6], space, seeding::derive(seed, &[99, attempt]));
        let mut inside = true;
        for s in 0..model.num_states() {
            for q in critic.predict_all(&model.observe(s))? {
                inside &= q > 0.05 * d && q < 0.95 * d;
            }
        }
        if inside {
            return Ok(critic);
        }
    }
    Err(Error::contract("no interior critic found"))
}

/// Max relative error between the exact two-term gradient and finite
/// differences of the enumerated objective over `points` random parameters.
pub fn policy_gradient_oracle_error(points: usize, with_critic_term: bool, seed: u64) -> Result<f64> {
    let model = oracle_cmdp();
    let space = ActionSpace::Discrete(2);
    let (horizon, d_prime, discount) = (3, 2.0, 0.9);
    let cfg = SmpoConfig {
        threshold: d_prime,
        base: 3.0,
        discount,
        return_form: ReturnForm::Literal,
        use_critic_grad_term: with_critic_term,
        ..SmpoConfig::default()
    };
    let critic = interior_critic(&model, d_prime, seed)?;
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let policy = PolicyFunction::new(2, &[4], space, seeding::derive(seed, &[i as u64]));
        // spread the logits so the points are not all near uniform
        let mut policy = policy;
        policy.update_params(|p| {
            let mut rng = seeding::rng(seed, Stream::Check, &[2, i as u64]);
            for x in p.iter_mut() {
                *x += rng.random_range(-1.0..1.0);
            }
            Ok(())
        })?;
        let analytic = exact_policy_gradient(&model, &policy, &critic, &cfg, d_prime, horizon)?;
        let numeric = finite_difference(
            |p| {
                let mut probe = policy.clone();
                probe.set_params(p).expect("finite params");
                enumerated_objective(
                    &model,
                    &probe,
                    &policy,
                    &critic,
                    cfg.base,
                    d_prime,
                    discount,
                    horizon,
                    with_critic_term,
                )
                .expect("enumerable")
            },
            &policy.params(),
            1e-5,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-6));
    }
    Ok(worst)
}

fn gradients_suite() -> Result<Vec<CheckResult>> {
    let w = weight_gradient_error(100, 7)?;
    let m = mlp_gradient_error(20, 7)?;
    let with_b = policy_gradient_oracle_error(10, true, 7)?;
    let without_b = policy_gradient_oracle_error(10, false, 7)?;
    Ok(vec![
        CheckResult::new(
            "weighting gradient vs finite differences",
            w <= 1e-8,
            format!("max rel err {w:.3e}"),
        ),
        CheckResult::new(
            "MLP backward vs finite differences",
            m <= 1e-5,
            format!("max rel err {m:.3e}"),
        ),
        CheckResult::new(
            "policy gradient vs enumerated objective (critic term on)",
            with_b <= 1e-5,
            format!("max rel err {with_b:.3e}"),
        ),
        CheckResult::new(
            "policy gradient vs enumerated objective (critic term off)",
            without_b <= 1e-5,
            format!("max rel err {without_b:.3e}"),
        ),
    ])
}

/// Moves toward the goal (ignoring hazards) with probability `1 − noise`,
/// uniformly at random otherwise.
pub fn goal_directed_policy(grid: &HazardGrid, noise: f64) -> TablePolicy {
    let probs = (0..grid.num_states())
        .map(|s| {
            let here = grid.cell(s);
            let toward: Vec<usize> = (0..4)
                .filter(|&a| grid.moved(here, a).manhattan(grid.goal()) < here.manhattan(grid.goal()))
                .collect();
            (0..4)
                .map(|a| {
                    let greedy = if toward.contains(&a) {
                        (1.0 - noise) / toward.len() as f64
                    } else {
                        0.0
                    };
                    if toward.is_empty() {
                        0.25
                    } else {
                        greedy + noise / 4.0
                    }
                })
                .collect()
        })
        .collect();
    TablePolicy::new(probs).expect("rows sum to one")
}

/// Outcome of fitting an MLP critic to a fixed policy and comparing against DP.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticOracleReport {
    pub transitions: usize,
    /// `(s, a)` pairs visited at least `min_visits` times.
    pub compared_pairs: usize,
    pub max_abs_error: f64,
    /// `(state, action, predicted, exact)` at the largest error.
    pub worst: (usize, usize, f64, f64),
    pub final_loss: f64,
}

/// Collects at least `transitions` steps of `policy` on `model`.
pub fn collect_transitions<M, P>(
    model: M,
    policy: &P,
    max_episode_steps: usize,
    discount: f64,
    transitions: usize,
    seed: u64,
) -> Result<Vec<Transition>>
where
    M: TabularModel + Send,
    P: StochasticPolicy + ?Sized,
{
    let mut env = TabularEnv::new(model, max_episode_steps, discount)?;
    let mut data = Vec::with_capacity(transitions + max_episode_steps);
    let mut episode = 0u64;
    while data.len() < transitions {
        let mut rng = seeding::rng(seed, Stream::Episode, &[episode]);
        data.extend(rollout_episode(&mut env, policy, &mut rng, max_episode_steps)?.transitions);
        episode += 1;
    }
    Ok(data)
}

fn one_hot_index(x: &[f64]) -> usize {
    x.iter().position(|&v| v == 1.0).expect("one-hot observation")
}

/// Fits a critic (λ = 0) on grid transitions from a noisy goal-directed
/// policy and reports the worst error against the DP table.
pub fn critic_oracle_report(
    transitions: usize,
    schedule: FitSchedule,
    min_visits: usize,
) -> Result<CriticOracleReport> {
    let grid = HazardGrid::default();
    let policy = goal_directed_policy(&grid, 0.3);
    let discount = 0.99;
    let data = collect_transitions(grid.clone(), &policy, 200, discount, transitions, schedule.seed)?;
    let exact = dp_cost_oracle(&grid, &policy, discount, 1e-9)?;

    let mut critic = SafetyCritic::new(grid.num_states(), &[64, 64], ActionSpace::Discrete(4), schedule.seed);
    let cfg = CriticConfig {
        l2: 0.0,
        discount,
        ..CriticConfig::default()
    };
    let final_loss = fit_fixed_policy(&mut critic, &data, &policy, &cfg, schedule)?;

    let mut visits: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &data {
        *visits
            .entry((one_hot_index(&t.state), t.action.index().expect("discrete")))
            .or_default() += 1;
    }
    let mut max_abs_error: f64 = 0.0;
    let mut worst = (0, 0, 0.0, 0.0);
    let mut compared_pairs = 0;
    for (&(s, a), &n) in &visits {
        if n < min_visits {
            continue;
        }
        compared_pairs += 1;
        let q = critic.predict(&grid.observe(s), &Action::Discrete(a))?;
        let err = (q - exact.get(s, a)).abs();
        if err > max_abs_error {
            max_abs_error = err;
            worst = (s, a, q, exact.get(s, a));
        }
    }
    Ok(CriticOracleReport {
        transitions: data.len(),
        compared_pairs,
        max_abs_error,
        worst,
        final_loss,
    })
}

/// Fits a critic (λ = 0) on the cost-1 self-loop and returns its prediction,
/// which should approach `1 / (1 − γ)`.
pub fn self_loop_estimate(transitions: usize, schedule: FitSchedule) -> Result<f64> {
    let model = FiniteCmdp::self_loop(1.0);
    let policy = TablePolicy::uniform(1, 1);
    // one long episode keeps truncated transitions negligible
    let data = collect_transitions(model, &policy, transitions, 0.99, transitions, schedule.seed)?;
    let mut critic = SafetyCritic::new(1, &[8], ActionSpace::Discrete(1), schedule.seed);
    let cfg = CriticConfig {
        l2: 0.0,
        discount: 0.99,
        ..CriticConfig::default()
    };
    fit_fixed_policy(&mut critic, &data, &policy, &cfg, schedule)?;
    critic.predict(&[1.0], &Action::Discrete(0))
}

pub const CRITIC_FIT: FitSchedule = FitSchedule {
    steps: 6000,
    batch: 64,
    lr: 1e-3,
    seed: 17,
};

pub const SELF_LOOP_FIT: FitSchedule = FitSchedule {
    steps: 3000,
    batch: 32,
    lr: 3e-2,
    seed: 17,
};

fn oracle_suite() -> Result<Vec<CheckResult>> {
    let q = dp_cost_oracle(&FiniteCmdp::self_loop(1.0), &TablePolicy::uniform(1, 1), 0.99, 1e-9)?.get(0, 0);
    let corridor = dp_cost_oracle(&FiniteCmdp::corridor(3), &TablePolicy::uniform(4, 1), 0.99, 1e-9)?.get(0, 0);
    let report = critic_oracle_report(50_000, CRITIC_FIT, 100)?;
    let self_loop = self_loop_estimate(50_000, SELF_LOOP_FIT)?;
    Ok(vec![
        CheckResult::new("DP self-loop = 1/(1-γ)", (q - 100.0).abs() <= 1e-6, format!("{q:.9}")),
        CheckResult::new(
            "DP three-hazard corridor",
            (corridor - 2.9701).abs() <= 1e-9,
            format!("{corridor:.9}"),
        ),
        CheckResult::new(
            "MLP critic vs DP on grid",
            report.max_abs_error <= 0.25 && report.compared_pairs > 0,
            format!(
                "max abs err {:.4} over {} pairs ({} transitions)",
                report.max_abs_error, report.compared_pairs, report.transitions
            ),
        ),
        CheckResult::new(
            "MLP critic on self-loop",
            (self_loop - 100.0).abs() <= 2.0,
            format!("{self_loop:.3}"),
        ),
    ])
}
