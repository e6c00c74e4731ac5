use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpSpec, Trace};
use crate::cmdp::{Action, ActionDistribution, ActionSpace, StochasticPolicy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyHead {
    /// Softmax over the network's logits.
    Softmax,
    /// Diagonal Gaussian: mean = tanh(network output), state-independent log-σ.
    Gaussian,
}

pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2; // log(0.5)

/// Parameterized stochastic policy `π_θ`.
///
/// `θ` is the network's parameters followed, for Gaussian heads, by one
/// log-standard-deviation per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFunction {
    net: Mlp,
    head: PolicyHead,
    action_space: ActionSpace,
    log_std: Vec<f64>,
}

impl PolicyFunction {
    /// Tanh hidden layers; small output layer so the initial policy is close to
    /// uniform (softmax) or centred (Gaussian).
    pub fn new(observation_dim: usize, hidden: &[usize], action_space: ActionSpace, seed: u64) -> Self {
        match action_space {
            ActionSpace::Discrete(n) => {
                let spec =
                    MlpSpec::new(observation_dim, hidden, n).with_activations(Activation::Tanh, Activation::Identity);
                Self {
                    net: Mlp::init(spec, seed, 0.01),
                    head: PolicyHead::Softmax,
                    action_space,
                    log_std: Vec::new(),
                }
            }
            ActionSpace::Continuous { dim, .. } => {
                let spec =
                    MlpSpec::new(observation_dim, hidden, dim).with_activations(Activation::Tanh, Activation::Tanh);
                Self {
                    net: Mlp::init(spec, seed, 0.01),
                    head: PolicyHead::Gaussian,
                    action_space,
                    log_std: vec![INITIAL_LOG_STD; dim],
                }
            }
        }
    }

    pub fn from_parts(net: Mlp, action_space: ActionSpace, log_std: Vec<f64>) -> Result<Self> {
        let head = match action_space {
            ActionSpace::Discrete(n) if net.spec().output_dim == n && log_std.is_empty() => PolicyHead::Softmax,
            ActionSpace::Continuous { dim, .. } if net.spec().output_dim == dim && log_std.len() == dim => {
                PolicyHead::Gaussian
            }
            _ => return Err(Error::contract("network output does not match the action space")),
        };
        Ok(Self {
            net,
            head,
            action_space,
            log_std,
        })
    }

    pub fn head(&self) -> PolicyHead {
        self.head
    }

    pub fn action_space(&self) -> ActionSpace {
        self.action_space
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.log_std.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::contract("policy parameter length mismatch"));
        }
        let (net, log_std) = params.split_at(self.net.num_params());
        if log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy log-std".into()));
        }
        self.net.set_params(net)?;
        self.log_std.copy_from_slice(log_std);
        Ok(())
    }

    /// Applies `update` to the flat parameter vector in place.
    pub fn update_params<F: FnOnce(&mut [f64]) -> Result<()>>(&mut self, update: F) -> Result<()> {
        let mut p = self.params();
        update(&mut p)?;
        self.set_params(&p)
    }

    /// Softmax probabilities (discrete heads only).
    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.require_discrete()?;
        Ok(softmax(self.net.forward(state)?.as_slice()))
    }

    fn require_discrete(&self) -> Result<()> {
        match self.head {
            PolicyHead::Softmax => Ok(()),
            PolicyHead::Gaussian => Err(Error::contract("operation needs a softmax head")),
        }
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> Result<f64> {
        self.action_space.validate(action)?;
        match (self.head, action) {
            (PolicyHead::Softmax, Action::Discrete(a)) => {
                let logits = self.net.forward(state)?;
                Ok(log_softmax(&logits)[*a])
            }
            _ => self.distribution(state)?.log_prob(action),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Action> {
        Ok(self.distribution(state)?.sample(rng))
    }

    /// `∇_θ log π_θ(action | state)`.
    pub fn score(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.num_params()];
        self.accumulate_score(state, action, 1.0, &mut g)?;
        Ok(g)
    }

    /// `grad += weight · ∇_θ log π_θ(action | state)`.
    pub fn accumulate_score(&self, state: &[f64], action: &Action, weight: f64, grad: &mut [f64]) -> Result<()> {
        self.action_space.validate(action)?;
        if grad.len() != self.num_params() {
            return Err(Error::contract("gradient buffer has the wrong length"));
        }
        let trace = self.net.forward_trace(state)?;
        let n = self.net.num_params();
        match (self.head, action) {
            (PolicyHead::Softmax, Action::Discrete(a)) => {
                let mut cot: Vec<f64> = softmax(trace.output()).iter().map(|p| -weight * p).collect();
                cot[*a] += weight;
                self.net.backward_into(&trace, &cot, &mut grad[..n])
            }
            (PolicyHead::Gaussian, Action::Continuous(x)) => {
                let mean = trace.output();
                let mut cot = vec![0.0; mean.len()];
                for i in 0..mean.len() {
                    let var = (2.0 * self.log_std[i]).exp();
                    let diff = x[i] - mean[i];
                    cot[i] = weight * diff / var;
                    grad[n + i] += weight * (diff * diff / var - 1.0);
                }
                self.net.backward_into(&trace, &cot, &mut grad[..n])
            }
            _ => unreachable!("action validated against the head's space"),
        }
    }

    /// `grad += weight · ∇_θ Σ_a π_θ(a | state) · values[a]` (discrete heads).
    ///
    /// Equivalent to the probability-weighted sum of `values[a] · score(a)`.
    pub fn accumulate_expectation_grad(
        &self,
        state: &[f64],
        values: &[f64],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        self.require_discrete()?;
        let trace: Trace = self.net.forward_trace(state)?;
        let p = softmax(trace.output());
        if values.len() != p.len() {
            return Err(Error::contract("one value per action required"));
        }
        let mean: f64 = p.iter().zip(values).map(|(pi, v)| pi * v).sum();
        let cot: Vec<f64> = p.iter().zip(values).map(|(pi, v)| weight * pi * (v - mean)).collect();
        let n = self.net.num_params();
        self.net.backward_into(&trace, &cot, &mut grad[..n])
    }
}

impl StochasticPolicy for PolicyFunction {
    fn distribution(&self, state: &[f64]) -> Result<ActionDistribution> {
        let out = self.net.forward(state)?;
        Ok(match (self.head, self.action_space) {
            (PolicyHead::Softmax, _) => ActionDistribution::Categorical(softmax(&out)),
            (PolicyHead::Gaussian, ActionSpace::Continuous { low, high, .. }) => ActionDistribution::Gaussian {
                mean: out,
                std: self.log_std.iter().map(|l| l.exp()).collect(),
                low,
                high,
            },
            (PolicyHead::Gaussian, ActionSpace::Discrete(_)) => unreachable!("checked at construction"),
        })
    }
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{finite_difference, max_relative_error};
    use crate::seeding::{self, Stream};

    fn discrete(seed: u64) -> PolicyFunction {
        // full-scale output layer so probabilities are far from uniform
        let spec = MlpSpec::new(3, &[8, 8], 4);
        let net = Mlp::init(spec, seed, 1.0);
        PolicyFunction::from_parts(net, ActionSpace::Discrete(4), vec![]).unwrap()
    }

    fn gaussian(seed: u64) -> PolicyFunction {
        let spec = MlpSpec::new(3, &[8, 8], 2).with_activations(Activation::Tanh, Activation::Tanh);
        let net = Mlp::init(spec, seed, 1.0);
        let space = ActionSpace::Continuous {
            dim: 2,
            low: -1.0,
            high: 1.0,
        };
        PolicyFunction::from_parts(net, space, vec![-0.3, 0.2]).unwrap()
    }

    fn random_state(rng: &mut impl Rng) -> Vec<f64> {
        (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn uniform_softmax_log_prob() {
        let pol = PolicyFunction::from_parts(
            Mlp::zeros(MlpSpec::new(2, &[4, 4], 4)),
            ActionSpace::Discrete(4),
            vec![],
        )
        .unwrap();
        for a in 0..4 {
            let lp = pol.log_prob(&[0.3, 0.1], &Action::Discrete(a)).unwrap();
            assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        }
        assert!(pol.log_prob(&[0.3, 0.1], &Action::Discrete(4)).is_err());
    }

    #[test]
    fn gaussian_log_density_at_mode() {
        let pol = gaussian(1);
        let state = [0.2, -0.4, 0.9];
        let ActionDistribution::Gaussian { mean, .. } = pol.distribution(&state).unwrap() else {
            panic!("gaussian head")
        };
        let lp = pol.log_prob(&state, &Action::Continuous(mean)).unwrap();
        let expected = -(-0.3 + 0.2) - (2.0 / 2.0) * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn probabilities_are_normalized_and_positive() {
        let mut rng = seeding::rng(1, Stream::Check, &[]);
        let pol = discrete(3);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let p = pol.probabilities(&s).unwrap();
            assert!(p.iter().all(|&x| x > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let via_log: f64 = (0..4)
                .map(|a| pol.log_prob(&s, &Action::Discrete(a)).unwrap().exp())
                .sum();
            assert!((via_log - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn score_identity_holds() {
        let mut rng = seeding::rng(2, Stream::Check, &[]);
        let pol = discrete(4);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let p = pol.probabilities(&s).unwrap();
            let mut total = vec![0.0; pol.num_params()];
            for (a, &pa) in p.iter().enumerate() {
                pol.accumulate_score(&s, &Action::Discrete(a), pa, &mut total).unwrap();
            }
            assert!(total.iter().all(|g| g.abs() < 1e-8));
        }
    }

    #[test]
    fn scores_match_finite_differences() {
        let mut rng = seeding::rng(3, Stream::Check, &[]);
        for seed in 0..5 {
            for pol in [discrete(seed), gaussian(seed)] {
                let s = random_state(&mut rng);
                let action = pol.sample(&s, &mut rng).unwrap();
                let analytic = pol.score(&s, &action).unwrap();
                let numeric = finite_difference(
                    |p| {
                        let mut probe = pol.clone();
                        probe.set_params(p).unwrap();
                        probe.log_prob(&s, &action).unwrap()
                    },
                    &pol.params(),
                    1e-5,
                );
                let err = max_relative_error(&analytic, &numeric, 1e-4);
                assert!(err <= 1e-5, "relative error {err}");
            }
        }
    }

    #[test]
    fn expectation_gradient_matches_weighted_scores() {
        let pol = discrete(9);
        let s = [0.1, 0.5, -0.3];
        let values = [0.0, 1.0, 3.0, -2.0];
        let mut direct = vec![0.0; pol.num_params()];
        pol.accumulate_expectation_grad(&s, &values, 0.7, &mut direct).unwrap();
        let p = pol.probabilities(&s).unwrap();
        let mut via_scores = vec![0.0; pol.num_params()];
        for a in 0..4 {
            pol.accumulate_score(&s, &Action::Discrete(a), 0.7 * p[a] * values[a], &mut via_scores)
                .unwrap();
        }
        assert!(max_relative_error(&direct, &via_scores, 1e-9) < 1e-9);
    }

    #[test]
    fn gaussian_mean_score_vanishes_at_mode() {
        let mut pol = gaussian(5);
        pol.log_std = vec![-8.0, -8.0];
        let s = [0.3, 0.3, 0.3];
        let ActionDistribution::Gaussian { mean, .. } = pol.distribution(&s).unwrap() else {
            panic!()
        };
        let g = pol.score(&s, &Action::Continuous(mean)).unwrap();
        let n = pol.network().num_params();
        assert!(g[..n].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn sampling() {
        let mut rng = seeding::rng(4, Stream::Check, &[]);
        let spec = MlpSpec::new(1, &[], 4);
        let mut p = vec![0.0; spec.num_params()];
        p[4] = 50.0; // bias of action 0
        let pol =
            PolicyFunction::from_parts(Mlp::from_params(spec, p).unwrap(), ActionSpace::Discrete(4), vec![]).unwrap();
        for _ in 0..1000 {
            assert_eq!(pol.sample(&[0.0], &mut rng).unwrap(), Action::Discrete(0));
        }

        let uniform =
            PolicyFunction::from_parts(Mlp::zeros(MlpSpec::new(1, &[], 4)), ActionSpace::Discrete(4), vec![]).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[uniform.sample(&[0.0], &mut rng).unwrap().index().unwrap()] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * 0.25).abs() < 4.0 * sigma);
        }

        let a = uniform
            .sample(&[0.0], &mut seeding::rng(1, Stream::Check, &[]))
            .unwrap();
        let b = uniform
            .sample(&[0.0], &mut seeding::rng(1, Stream::Check, &[]))
            .unwrap();
        assert_eq!(a, b);

        let g = gaussian(0);
        for _ in 0..200 {
            let Action::Continuous(x) = g.sample(&[0.0, 0.0, 0.0], &mut rng).unwrap() else {
                panic!()
            };
            assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
