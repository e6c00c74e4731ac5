//! Q-cost safety critic.
//!
//! `Q^c_φ(s, a) = max(0, z_φ(s, a))` estimates the discounted future cost from
//! `(s, a)` under the current policy, where `z_φ` is an MLP with a linear
//! output. The pre-activation `z_φ` is regressed onto expected-SARSA targets
//! `c + γ · E_{a′~π(·|s′)} Q^c_φ(s′, a′)` with an L2 penalty. Because targets
//! are non-negative this agrees with regressing `Q^c_φ` itself wherever
//! `z_φ ≥ 0`, and it keeps a unit from dying once `z_φ` dips below zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{Activation, Adam, AdamConfig, Mlp, MlpSpec};
use crate::cmdp::{Action, ActionDistribution, ActionSpace, StochasticPolicy, TabularModel, Transition};
use crate::seeding::{self, Stream};
use crate::{Error, Result};

pub use crate::modulation::clip_cost as q_cost_clip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    /// Weight `λ ≥ 0` of the squared-prediction penalty.
    pub l2: f64,
    pub discount: f64,
    /// Samples `K ≥ 1` for the next-action expectation with continuous actions.
    pub samples: usize,
    /// Upper clip `d` applied when the estimate is consumed.
    pub threshold: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            l2: 0.1,
            discount: 0.99,
            samples: 4,
            threshold: 25.0,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) {
            return Err(Error::config("lambda must be non-negative"));
        }
        if self.samples == 0 {
            return Err(Error::config("critic expectation samples must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("discount must lie in (0, 1)"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::config("critic clip threshold must be positive"));
        }
        Ok(())
    }
}

/// One regression example.
#[derive(Debug, Clone, Copy)]
pub struct CriticSample<'a> {
    pub state: &'a [f64],
    pub action: &'a Action,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyCritic {
    net: Mlp,
    action_space: ActionSpace,
}

impl SafetyCritic {
    pub fn new(observation_dim: usize, hidden: &[usize], action_space: ActionSpace, seed: u64) -> Self {
        let spec = Self::spec(observation_dim, hidden, action_space);
        Self {
            net: Mlp::init(spec, seed, 1.0),
            action_space,
        }
    }

    pub fn spec(observation_dim: usize, hidden: &[usize], action_space: ActionSpace) -> MlpSpec {
        MlpSpec::new(observation_dim + action_space.encoding_dim(), hidden, 1)
            .with_activations(Activation::Tanh, Activation::Identity)
    }

    pub fn from_network(net: Mlp, action_space: ActionSpace) -> Result<Self> {
        let spec = net.spec();
        if spec.output_dim != 1 || spec.output_activation != Activation::Identity {
            return Err(Error::contract("critic network needs a single linear output"));
        }
        if spec.input_dim <= action_space.encoding_dim() {
            return Err(Error::contract("critic input too small for the action encoding"));
        }
        Ok(Self { net, action_space })
    }

    /// Same architecture with every output-layer parameter zeroed: predicts 0 everywhere.
    pub fn zero_output(mut self) -> Self {
        let out = *self.net.layer_slices().last().expect("output layer");
        for p in &mut self.net.params_mut()[out.weights..out.biases + out.outputs] {
            *p = 0.0;
        }
        self
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn action_space(&self) -> ActionSpace {
        self.action_space
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_params(params)
    }

    fn input(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        let expected = self.net.spec().input_dim - self.action_space.encoding_dim();
        if state.len() != expected {
            return Err(Error::contract(format!(
                "critic expects a state of dimension {expected}, got {}",
                state.len()
            )));
        }
        let mut x = Vec::with_capacity(self.net.spec().input_dim);
        x.extend_from_slice(state);
        self.action_space.encode_into(action, &mut x)?;
        Ok(x)
    }

    /// Pre-activation `z_φ(s, a)`.
    pub fn pre_activation(&self, state: &[f64], action: &Action) -> Result<f64> {
        Ok(self.net.forward(&self.input(state, action)?)?[0])
    }

    /// Raw (unclipped) prediction `Q^c_φ(s, a) = max(0, z_φ(s, a))`.
    pub fn predict(&self, state: &[f64], action: &Action) -> Result<f64> {
        Ok(self.pre_activation(state, action)?.max(0.0))
    }

    /// Predictions for every discrete action.
    pub fn predict_all(&self, state: &[f64]) -> Result<Vec<f64>> {
        let ActionSpace::Discrete(n) = self.action_space else {
            return Err(Error::contract("predict_all needs a discrete action space"));
        };
        (0..n).map(|a| self.predict(state, &Action::Discrete(a))).collect()
    }

    /// `E_{a′~π(·|s′)} Q^c_φ(s′, a′)`: exact for categorical policies, a
    /// `samples`-draw average for Gaussian ones.
    pub fn expected_next_value<P, R>(&self, next_state: &[f64], policy: &P, samples: usize, rng: &mut R) -> Result<f64>
    where
        P: StochasticPolicy + ?Sized,
        R: Rng + ?Sized,
    {
        match policy.distribution(next_state)? {
            ActionDistribution::Categorical(p) => {
                let q = self.predict_all(next_state)?;
                Ok(p.iter().zip(&q).map(|(pi, qi)| pi * qi).sum())
            }
            dist @ ActionDistribution::Gaussian { .. } => {
                let mut total = 0.0;
                for _ in 0..samples {
                    total += self.predict(next_state, &dist.sample(rng))?;
                }
                Ok(total / samples as f64)
            }
        }
    }

    /// Expected-SARSA target for one transition; terminal and truncated
    /// transitions bootstrap from 0.
    pub fn target<P, R>(&self, t: &Transition, policy: &P, cfg: &CriticConfig, rng: &mut R) -> Result<f64>
    where
        P: StochasticPolicy + ?Sized,
        R: Rng + ?Sized,
    {
        if t.done {
            return Ok(t.cost);
        }
        Ok(t.cost + cfg.discount * self.expected_next_value(&t.next_state, policy, cfg.samples, rng)?)
    }

    /// Mean over the batch of `(z − target)² + λ·z²` and its gradient in `φ`,
    /// with `z` the pre-activation; equal to `(Q − target)² + λ·Q²` when `z ≥ 0`.
    pub fn loss_and_grad(&self, batch: &[CriticSample<'_>], l2: f64) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch("critic loss needs at least one sample"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.num_params()];
        for s in batch {
            if !s.target.is_finite() {
                return Err(Error::NonFinite("critic target".into()));
            }
            let trace = self.net.forward_trace(&self.input(s.state, s.action)?)?;
            let z = trace.output()[0];
            let err = z - s.target;
            loss += scale * (err * err + l2 * z * z);
            let cot = [scale * 2.0 * (err + l2 * z)];
            self.net.backward_into(&trace, &cot, &mut grad)?;
        }
        Ok((loss, grad))
    }
}

/// Regression schedule for [`fit_fixed_policy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSchedule {
    pub steps: usize,
    pub batch: usize,
    /// Initial learning rate; decays linearly to a tenth of this by the last step.
    pub lr: f64,
    pub seed: u64,
}

/// Fits the critic to a fixed policy's transitions by repeated minibatch
/// expected-SARSA regression with fresh targets each step. Returns the final loss.
pub fn fit_fixed_policy<P>(
    critic: &mut SafetyCritic,
    data: &[Transition],
    policy: &P,
    cfg: &CriticConfig,
    schedule: FitSchedule,
) -> Result<f64>
where
    P: StochasticPolicy + ?Sized,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch("critic fitting needs transitions"));
    }
    let mut opt = Adam::new(critic.num_params(), AdamConfig::default());
    let mut rng = seeding::rng(schedule.seed, Stream::Minibatch, &[]);
    let mut params = critic.params().to_vec();
    let mut loss = f64::NAN;
    for step in 0..schedule.steps {
        let lr = schedule.lr * (1.0 - 0.9 * step as f64 / schedule.steps as f64);
        let batch: Vec<&Transition> = (0..schedule.batch)
            .map(|_| &data[rng.random_range(0..data.len())])
            .collect();
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| critic.target(t, policy, cfg, &mut rng))
            .collect::<Result<_>>()?;
        let samples: Vec<CriticSample> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &target)| CriticSample {
                state: &t.state,
                action: &t.action,
                target,
            })
            .collect();
        let (l, grad) = critic.loss_and_grad(&samples, cfg.l2)?;
        opt.step(&mut params, &grad, lr)?;
        critic.set_params(&params)?;
        loss = l;
    }
    Ok(loss)
}

/// Exact `Q^c` table for a fixed policy on a tabular model.
#[derive(Debug, Clone, PartialEq)]
pub struct QCostTable {
    pub values: Vec<Vec<f64>>,
    pub sweeps: usize,
}

impl QCostTable {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state][action]
    }
}

pub const MAX_SWEEPS: usize = 100_000;

/// Iterative policy evaluation of
/// `Q(s, a) = c(s, a) + γ · [¬terminal] · Σ_{a′} π(a′|s′) Q(s′, a′)`.
///
/// Stops once the sup-norm Bellman residual guarantees `|Q − Q*| ≤ tol`.
pub fn dp_cost_oracle<M, P>(model: &M, policy: &P, discount: f64, tol: f64) -> Result<QCostTable>
where
    M: TabularModel + ?Sized,
    P: StochasticPolicy + ?Sized,
{
    if !(tol > 0.0) || !(discount > 0.0 && discount < 1.0) {
        return Err(Error::contract("dp_cost_oracle needs tol > 0 and γ in (0, 1)"));
    }
    let (ns, na) = (model.num_states(), model.num_actions());
    let probs: Vec<Vec<f64>> = (0..ns)
        .map(|s| match policy.distribution(&model.observe(s))? {
            ActionDistribution::Categorical(p) if p.len() == na => Ok(p),
            _ => Err(Error::contract("dp_cost_oracle needs a categorical policy")),
        })
        .collect::<Result<_>>()?;
    let steps: Vec<Vec<_>> = (0..ns)
        .map(|s| (0..na).map(|a| model.transition(s, a)).collect())
        .collect();

    let stop = tol * (1.0 - discount);
    let mut q = vec![vec![0.0; na]; ns];
    for sweep in 1..=MAX_SWEEPS {
        let v: Vec<f64> = (0..ns)
            .map(|s| probs[s].iter().zip(&q[s]).map(|(p, x)| p * x).sum())
            .collect();
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let st = steps[s][a];
                let bootstrap = if st.terminal { 0.0 } else { v[st.next] };
                let updated = st.cost + discount * bootstrap;
                residual = residual.max((updated - q[s][a]).abs());
                q[s][a] = updated;
            }
        }
        if residual <= stop {
            return Ok(QCostTable {
                values: q,
                sweeps: sweep,
            });
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps: sweep,
                residual,
            });
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{finite_difference, max_relative_error, PolicyFunction};
    use crate::cmdp::{FiniteCmdp, HazardGrid, TablePolicy};

    fn constant_critic(obs_dim: usize, actions: usize, value: f64) -> SafetyCritic {
        let mut c = SafetyCritic::new(obs_dim, &[4, 4], ActionSpace::Discrete(actions), 0).zero_output();
        let bias = c.net.layer_slices().last().unwrap().biases;
        c.net.params_mut()[bias] = value;
        c
    }

    fn transition(cost: f64, done: bool) -> Transition {
        Transition {
            state: vec![1.0, 0.0],
            action: Action::Discrete(0),
            reward: 0.0,
            cost,
            next_state: vec![0.0, 1.0],
            done,
            running_cum_cost: 0.0,
            critic_estimate: 0.0,
            stored_total_cost: 0.0,
        }
    }

    #[test]
    fn zero_output_predicts_zero_and_predictions_are_non_negative() {
        let c = SafetyCritic::new(3, &[8, 8], ActionSpace::Discrete(2), 1);
        let mut rng = seeding::rng(0, Stream::Check, &[]);
        for _ in 0..200 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(c.predict(&s, &Action::Discrete(rng.random_range(0..2))).unwrap() >= 0.0);
        }
        let z = c.zero_output();
        assert_eq!(z.predict(&[0.3, 0.2, 0.1], &Action::Discrete(1)).unwrap(), 0.0);
        assert!(z.predict(&[0.3, 0.2], &Action::Discrete(1)).is_err());
    }

    #[test]
    fn targets_by_hand() {
        let cfg = CriticConfig {
            discount: 0.99,
            ..CriticConfig::default()
        };
        let mut rng = seeding::rng(0, Stream::Check, &[]);
        let uniform = TablePolicy::uniform(2, 2);

        let c = constant_critic(2, 2, 2.0);
        assert_eq!(c.target(&transition(1.0, true), &uniform, &cfg, &mut rng).unwrap(), 1.0);
        let t = c.target(&transition(0.0, false), &uniform, &cfg, &mut rng).unwrap();
        assert!((t - 1.98).abs() < 1e-12);

        // next-values {1, 3}: weight on the action-1 input equals 2
        let mut c = constant_critic(2, 2, 1.0);
        let out = *c.net.layer_slices().last().unwrap();
        let hidden = c.net.layer_slices()[1];
        // route the action one-hot straight through: hidden unit 0 of layer 1 ≈ a1
        let w0 = c.net.layer_slices()[0];
        let params = c.net.params_mut();
        for p in &mut params[w0.weights..w0.biases + w0.outputs] {
            *p = 0.0;
        }
        for p in &mut params[hidden.weights..hidden.biases + hidden.outputs] {
            *p = 0.0;
        }
        // layer 0 unit 0 = tanh(k · a1); layer 1 unit 0 = tanh(k · that); out = 1 + 2·that/(tanh(k·tanh k))
        let k = 20.0;
        params[w0.weights + 3] = k; // input index 3 is the action-1 indicator
        params[hidden.weights] = k;
        let scale = (k * k.tanh()).tanh();
        params[out.weights] = 2.0 / scale;
        let q = c.predict_all(&[0.0, 1.0]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 3.0).abs() < 1e-12);
        let t = c.target(&transition(1.0, false), &uniform, &cfg, &mut rng).unwrap();
        assert!((t - 2.98).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let c = constant_critic(2, 2, 2.0);
        let a = Action::Discrete(0);
        let s = [1.0, 0.0];
        let at = |target| {
            [CriticSample {
                state: &s,
                action: &a,
                target,
            }]
        };
        let (loss, grad) = c.loss_and_grad(&at(2.0), 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        assert!((c.loss_and_grad(&at(0.0), 0.0).unwrap().0 - 4.0).abs() < 1e-12);
        assert!((c.loss_and_grad(&at(0.0), 0.1).unwrap().0 - 4.4).abs() < 1e-12);
        assert!(c.loss_and_grad(&at(f64::NAN), 0.1).is_err());
        assert!(c.loss_and_grad(&[], 0.1).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = seeding::rng(5, Stream::Check, &[]);
        for seed in 0..5 {
            let c = SafetyCritic::new(3, &[6, 6], ActionSpace::Discrete(3), seed);
            let states: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let actions: Vec<Action> = (0..6).map(|i| Action::Discrete(i % 3)).collect();
            let batch: Vec<CriticSample> = states
                .iter()
                .zip(&actions)
                .map(|(s, a)| CriticSample {
                    state: s,
                    action: a,
                    target: rng.random_range(0.0..3.0),
                })
                .collect();
            let (_, analytic) = c.loss_and_grad(&batch, 0.1).unwrap();
            let numeric = finite_difference(
                |p| {
                    let mut probe = c.clone();
                    probe.set_params(p).unwrap();
                    probe.loss_and_grad(&batch, 0.1).unwrap().0
                },
                c.params(),
                1e-5,
            );
            assert!(max_relative_error(&analytic, &numeric, 1e-4) <= 1e-5);
        }
    }

    #[test]
    fn continuous_target_uses_samples() {
        let space = ActionSpace::Continuous {
            dim: 2,
            low: -1.0,
            high: 1.0,
        };
        let pol = PolicyFunction::new(3, &[4, 4], space, 0);
        let c = SafetyCritic::new(3, &[4, 4], space, 1);
        let t = Transition {
            state: vec![0.0; 3],
            action: Action::Continuous(vec![0.0, 0.0]),
            reward: 0.0,
            cost: 1.0,
            next_state: vec![0.1, 0.2, 0.3],
            done: false,
            running_cum_cost: 0.0,
            critic_estimate: 0.0,
            stored_total_cost: 0.0,
        };
        let cfg = CriticConfig::default();
        let a = c
            .target(&t, &pol, &cfg, &mut seeding::rng(1, Stream::Check, &[]))
            .unwrap();
        let b = c
            .target(&t, &pol, &cfg, &mut seeding::rng(1, Stream::Check, &[]))
            .unwrap();
        assert_eq!(a, b);
        assert!(a >= 1.0);
    }

    fn self_loop_data(cost: f64) -> Vec<Transition> {
        vec![Transition {
            state: vec![1.0],
            action: Action::Discrete(0),
            reward: 0.0,
            cost,
            next_state: vec![1.0],
            done: false,
            running_cum_cost: 0.0,
            critic_estimate: 0.0,
            stored_total_cost: 0.0,
        }]
    }

    fn fit_self_loop(cost: f64, l2: f64) -> f64 {
        let mut c = SafetyCritic::new(1, &[8], ActionSpace::Discrete(1), 3);
        let cfg = CriticConfig {
            l2,
            discount: 0.5,
            ..CriticConfig::default()
        };
        let schedule = FitSchedule {
            steps: 3000,
            batch: 8,
            lr: 1e-2,
            seed: 0,
        };
        fit_fixed_policy(
            &mut c,
            &self_loop_data(cost),
            &TablePolicy::uniform(1, 1),
            &cfg,
            schedule,
        )
        .unwrap();
        c.predict(&[1.0], &Action::Discrete(0)).unwrap()
    }

    #[test]
    fn shrinkage_moves_the_fixed_point() {
        // Q = c / (1 + λ − γ)
        let plain = fit_self_loop(1.0, 0.0);
        let shrunk = fit_self_loop(1.0, 0.1);
        assert!((plain - 2.0).abs() < 0.02, "{plain}");
        assert!((shrunk - 1.0 / 0.6).abs() < 0.02, "{shrunk}");
        assert!(shrunk <= plain);
    }

    #[test]
    fn zero_cost_data_trains_to_zero() {
        let mut rng = seeding::rng(9, Stream::Check, &[]);
        let data: Vec<Transition> = (0..64)
            .map(|i| Transition {
                state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: Action::Discrete(i % 2),
                reward: 1.0,
                cost: 0.0,
                next_state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: i % 7 == 0,
                running_cum_cost: 0.0,
                critic_estimate: 0.0,
                stored_total_cost: 0.0,
            })
            .collect();
        let mut c = SafetyCritic::new(3, &[16, 16], ActionSpace::Discrete(2), 4);
        let cfg = CriticConfig {
            l2: 0.1,
            discount: 0.99,
            ..CriticConfig::default()
        };
        let schedule = FitSchedule {
            steps: 1000,
            batch: 32,
            lr: 3e-3,
            seed: 1,
        };
        let policy = PolicyFunction::new(3, &[4], ActionSpace::Discrete(2), 0);
        fit_fixed_policy(&mut c, &data, &policy, &cfg, schedule).unwrap();
        for t in &data {
            assert!(c.predict(&t.state, &t.action).unwrap() <= 0.05);
        }
    }

    #[test]
    fn negative_pre_activation_still_learns() {
        let mut c = constant_critic(2, 2, -1.0);
        let (s, a) = ([1.0, 0.0], Action::Discrete(0));
        assert_eq!(c.predict(&s, &a).unwrap(), 0.0);
        let batch = [CriticSample {
            state: &s,
            action: &a,
            target: 1.0,
        }];
        let (_, grad) = c.loss_and_grad(&batch, 0.0).unwrap();
        let bias = c.net.layer_slices().last().unwrap().biases;
        assert!((grad[bias] + 4.0).abs() < 1e-12);
        let mut params = c.params().to_vec();
        params[bias] -= 0.6 * grad[bias];
        c.set_params(&params).unwrap();
        assert!(c.predict(&s, &a).unwrap() > 0.0);
    }

    #[test]
    fn oracle_geometric_series() {
        let q = dp_cost_oracle(&FiniteCmdp::self_loop(1.0), &TablePolicy::uniform(1, 1), 0.99, 1e-9).unwrap();
        assert!((q.get(0, 0) - 100.0).abs() <= 1e-9);
    }

    #[test]
    fn oracle_zero_cost_and_corridor() {
        let grid = HazardGrid::new(
            5,
            5,
            crate::cmdp::Cell::new(0, 0),
            crate::cmdp::Cell::new(4, 4),
            Default::default(),
            Default::default(),
        )
        .unwrap();
        let q = dp_cost_oracle(&grid, &TablePolicy::uniform(25, 4), 0.99, 1e-9).unwrap();
        assert!(q.values.iter().flatten().all(|&v| v == 0.0));

        let corridor = FiniteCmdp::corridor(3);
        let q = dp_cost_oracle(&corridor, &TablePolicy::uniform(4, 1), 0.99, 1e-9).unwrap();
        assert!((q.get(0, 0) - 2.9701).abs() <= 1e-9);
    }
}
