use rand::Rng;
use rand_distr::StandardNormal;

use super::Action;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Action distribution at one state.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Categorical(Vec<f64>),
    /// Diagonal Gaussian; samples are clamped to `[low, high]`.
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
        low: f64,
        high: f64,
    },
}

impl ActionDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDistribution::Categorical(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return Action::Discrete(i);
                    }
                }
                // u landed in the rounding slack above the last partial sum
                let last = p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0);
                Action::Discrete(last)
            }
            ActionDistribution::Gaussian { mean, std, low, high } => Action::Continuous(
                mean.iter()
                    .zip(std)
                    .map(|(m, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        (m + s * z).clamp(*low, *high)
                    })
                    .collect(),
            ),
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDistribution::Categorical(p), Action::Discrete(a)) => p
                .get(*a)
                .map(|pa| pa.ln())
                .ok_or_else(|| Error::contract(format!("action {a} out of range"))),
            (ActionDistribution::Gaussian { mean, std, .. }, Action::Continuous(x)) if x.len() == mean.len() => {
                Ok(mean
                    .iter()
                    .zip(std)
                    .zip(x)
                    .map(|((m, s), xi)| {
                        let z = (xi - m) / s;
                        -0.5 * z * z - s.ln() - 0.5 * LN_2PI
                    })
                    .sum())
            }
            _ => Err(Error::contract("action does not match distribution")),
        }
    }
}

/// Anything that maps an observation to an action distribution.
pub trait StochasticPolicy {
    fn distribution(&self, observation: &[f64]) -> Result<ActionDistribution>;
}

/// A fixed tabular policy over one-hot observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePolicy {
    probs: Vec<Vec<f64>>,
}

impl TablePolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!("row {s} is not a probability vector")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / actions as f64; actions]; states],
        }
    }

    pub fn probs(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }
}

impl StochasticPolicy for TablePolicy {
    fn distribution(&self, observation: &[f64]) -> Result<ActionDistribution> {
        if observation.len() != self.probs.len() {
            return Err(Error::contract(format!(
                "table policy expects a one-hot observation of length {}",
                self.probs.len()
            )));
        }
        let state = observation
            .iter()
            .position(|&x| x == 1.0)
            .ok_or_else(|| Error::contract("observation is not one-hot"))?;
        Ok(ActionDistribution::Categorical(self.probs[state].clone()))
    }
}
