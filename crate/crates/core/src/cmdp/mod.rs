//! Constrained MDP contract: environments, transitions, rollouts and the
//! exact trajectory enumerator used as an oracle on tiny tabular instances.

mod finite;
mod hazard_grid;
mod point_hazard;
mod policy;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use finite::FiniteCmdp;
pub use hazard_grid::{Cell, GoalMode, HazardGrid};
pub use point_hazard::{Hazard, PointHazard, PointHazardParams};
pub use policy::{ActionDistribution, StochasticPolicy, TablePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[low, high]^dim`.
    Continuous {
        dim: usize,
        low: f64,
        high: f64,
    },
}

impl ActionSpace {
    /// Width of the action encoding fed to a critic (one-hot or raw vector).
    pub fn encoding_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous { dim, .. } => dim,
        }
    }

    pub fn validate(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) if a < n => Ok(()),
            (ActionSpace::Discrete(n), Action::Discrete(a)) => Err(Error::contract(format!(
                "action index {a} out of range for {n} actions"
            ))),
            (ActionSpace::Continuous { dim, .. }, Action::Continuous(v)) if v.len() == *dim => {
                if v.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::contract("continuous action has non-finite entries"))
                }
            }
            (ActionSpace::Continuous { dim, .. }, Action::Continuous(v)) => Err(Error::contract(format!(
                "action has dimension {}, expected {dim}",
                v.len()
            ))),
            _ => Err(Error::contract(format!(
                "action kind does not match action space {self:?}"
            ))),
        }
    }

    /// Writes the critic-side encoding of `action` into `out`.
    pub fn encode_into(&self, action: &Action, out: &mut Vec<f64>) -> Result<()> {
        self.validate(action)?;
        match action {
            Action::Discrete(a) => {
                let start = out.len();
                out.resize(start + self.encoding_dim(), 0.0);
                out[start + a] = 1.0;
            }
            Action::Continuous(v) => out.extend_from_slice(v),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    /// Step budget `T` per episode.
    pub max_episode_steps: usize,
    /// Discount `γ ∈ (0, 1)`.
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    /// True only for genuine terminal states; the step budget is the caller's.
    pub terminal: bool,
}

/// A constrained MDP with an internal current state.
pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. Deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<StepOutcome>;
}

/// Finite state/action CMDP with deterministic transitions.
pub trait TabularModel {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn start_state(&self) -> usize;
    fn transition(&self, state: usize, action: usize) -> TabularStep;

    fn observe(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states()];
        v[state] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularStep {
    pub next: usize,
    pub reward: f64,
    pub cost: f64,
    pub terminal: bool,
}

/// Runs any [`TabularModel`] as an [`Environment`].
#[derive(Debug, Clone)]
pub struct TabularEnv<M> {
    model: M,
    state: usize,
    max_episode_steps: usize,
    discount: f64,
}

impl<M: TabularModel> TabularEnv<M> {
    pub fn new(model: M, max_episode_steps: usize, discount: f64) -> Result<Self> {
        validate_episode_params(max_episode_steps, discount)?;
        let state = model.start_state();
        Ok(Self {
            model,
            state,
            max_episode_steps,
            discount,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

pub(crate) fn validate_episode_params(max_episode_steps: usize, discount: f64) -> Result<()> {
    if max_episode_steps == 0 {
        return Err(Error::config("max_episode_steps must be positive"));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::config(format!("discount {discount} must lie in (0, 1)")));
    }
    Ok(())
}

impl<M: TabularModel + Send> Environment for TabularEnv<M> {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: self.model.observe(0).len(),
            action_space: ActionSpace::Discrete(self.model.num_actions()),
            max_episode_steps: self.max_episode_steps,
            discount: self.discount,
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.state = self.model.start_state();
        self.model.observe(self.state)
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        ActionSpace::Discrete(self.model.num_actions()).validate(action)?;
        let a = action.index().expect("validated discrete action");
        let out = self.model.transition(self.state, a);
        self.state = out.next;
        Ok(StepOutcome {
            observation: self.model.observe(out.next),
            reward: out.reward,
            cost: out.cost,
            terminal: out.terminal,
        })
    }
}

/// One environment step plus the bookkeeping used by cost-aware weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub cost: f64,
    pub next_state: Vec<f64>,
    /// Terminal state reached or step budget exhausted.
    pub done: bool,
    /// Costs accumulated before this step, `Σ_{k<t} c_k`.
    pub running_cum_cost: f64,
    /// Raw critic estimate at collection time (0 when no critic is attached).
    pub critic_estimate: f64,
    /// `running_cum_cost` plus the clipped critic estimate.
    pub stored_total_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub episode_reward_discounted: f64,
    pub episode_cost_undiscounted: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn episode_reward_undiscounted(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    fn from_steps(transitions: Vec<Transition>, discount: f64) -> Self {
        let mut g = 1.0;
        let mut reward = 0.0;
        let mut cost = 0.0;
        for t in &transitions {
            reward += g * t.reward;
            cost += t.cost;
            g *= discount;
        }
        Trajectory {
            transitions,
            episode_reward_discounted: reward,
            episode_cost_undiscounted: cost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    pub discounted_reward: f64,
    pub discounted_cost: f64,
    pub undiscounted_cost: f64,
}

pub fn episode_metrics(traj: &Trajectory, discount: f64) -> Result<EpisodeMetrics> {
    if traj.is_empty() {
        return Err(Error::EmptyBatch("episode_metrics needs a non-empty trajectory"));
    }
    let mut g = 1.0;
    let mut m = EpisodeMetrics {
        discounted_reward: 0.0,
        discounted_cost: 0.0,
        undiscounted_cost: 0.0,
    };
    for t in &traj.transitions {
        m.discounted_reward += g * t.reward;
        m.discounted_cost += g * t.cost;
        m.undiscounted_cost += t.cost;
        g *= discount;
    }
    Ok(m)
}

/// Samples one episode of at most `max_steps` steps.
///
/// The environment is reset with a seed drawn from `rng`, so the whole
/// trajectory is a deterministic function of the generator state.
pub fn rollout_episode<E, P, R>(env: &mut E, policy: &P, rng: &mut R, max_steps: usize) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: StochasticPolicy + ?Sized,
    R: Rng + ?Sized,
{
    let spec = env.spec();
    let mut state = env.reset(rng.random());
    let mut cum_cost = 0.0;
    let mut steps = Vec::with_capacity(max_steps.min(4096));
    for t in 0..max_steps {
        let action = policy.distribution(&state)?.sample(rng);
        let out = env.step(&action)?;
        if out.reward < 0.0 {
            log::warn!("environment emitted negative reward {} at step {t}", out.reward);
        }
        let done = out.terminal || t + 1 == max_steps;
        steps.push(Transition {
            state,
            action,
            reward: out.reward,
            cost: out.cost,
            next_state: out.observation.clone(),
            done,
            running_cum_cost: cum_cost,
            critic_estimate: 0.0,
            stored_total_cost: cum_cost,
        });
        cum_cost += out.cost;
        state = out.observation;
        if done {
            break;
        }
    }
    Ok(Trajectory::from_steps(steps, spec.discount))
}

/// Upper bound on `|A|^H` accepted by [`enumerate_trajectories`].
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Every trajectory of length at most `horizon` with nonzero probability
/// under `policy`, paired with that probability.
pub fn enumerate_trajectories<M, P>(
    model: &M,
    policy: &P,
    horizon: usize,
    discount: f64,
) -> Result<Vec<(Trajectory, f64)>>
where
    M: TabularModel + ?Sized,
    P: StochasticPolicy + ?Sized,
{
    let branches = (model.num_actions() as f64).powi(horizon as i32);
    if branches > ENUMERATION_LIMIT {
        return Err(Error::EnumerationBudget {
            branches,
            limit: ENUMERATION_LIMIT,
        });
    }
    if horizon == 0 {
        return Err(Error::contract("horizon must be positive"));
    }
    let probs: Vec<Vec<f64>> = (0..model.num_states())
        .map(|s| match policy.distribution(&model.observe(s))? {
            ActionDistribution::Categorical(p) if p.len() == model.num_actions() => Ok(p),
            _ => Err(Error::contract(
                "enumeration needs a categorical policy over the model's actions",
            )),
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(horizon);
    expand(
        model,
        &probs,
        horizon,
        discount,
        model.start_state(),
        1.0,
        0.0,
        &mut prefix,
        &mut out,
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn expand<M: TabularModel + ?Sized>(
    model: &M,
    probs: &[Vec<f64>],
    horizon: usize,
    discount: f64,
    state: usize,
    prob: f64,
    cum_cost: f64,
    prefix: &mut Vec<Transition>,
    out: &mut Vec<(Trajectory, f64)>,
) {
    let t = prefix.len();
    for (a, &pa) in probs[state].iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        let step = model.transition(state, a);
        let done = step.terminal || t + 1 == horizon;
        prefix.push(Transition {
            state: model.observe(state),
            action: Action::Discrete(a),
            reward: step.reward,
            cost: step.cost,
            next_state: model.observe(step.next),
            done,
            running_cum_cost: cum_cost,
            critic_estimate: 0.0,
            stored_total_cost: cum_cost,
        });
        if done {
            out.push((Trajectory::from_steps(prefix.clone(), discount), prob * pa));
        } else {
            expand(
                model,
                probs,
                horizon,
                discount,
                step.next,
                prob * pa,
                cum_cost + step.cost,
                prefix,
                out,
            );
        }
        prefix.pop();
    }
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    step: usize,
    state: &'a [f64],
    action: &'a Action,
    reward: f64,
    cost: f64,
    cum_cost: f64,
}

/// Writes one JSON object per step: `step, state, action, reward, cost, cum_cost`.
///
/// `cum_cost` includes the step's own cost.
pub fn write_trajectory_dump<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    for (step, t) in traj.transitions.iter().enumerate() {
        let rec = DumpRecord {
            step,
            state: &t.state,
            action: &t.action,
            reward: t.reward,
            cost: t.cost,
            cum_cost: t.running_cum_cost + t.cost,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
