//! Safety-modulated policy optimization.
//!
//! Each epoch collects on-policy episodes, freezes the per-step total cost
//! estimate `Σ_{k<t} c_k + clip(Q^c(s_t, a_t), 0, d′)`, and then alternates
//! critic regression and policy ascent on the modulated objective
//! `E[Σ_t γ^t f(total_t) r_t]`.
//!
//! The policy gradient has two parts: the score-function term weighted by
//! modulated returns, and a critic term `r_t · ∂f/∂q · ∇_θ Q^c(s_t, a_t)` with
//! `∇_θ Q^c(s_t, a_t) = γ · E_{a~π(·|s_{t+1})}[Q^c(s_{t+1}, a) ∇_θ log π(a|s_{t+1})]`.
//!
//! The same [`Trainer`] drives the unconstrained and Lagrangian baselines.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{Adam, AdamConfig, PolicyFunction, PolicyHead};
use crate::baselines::{lagrange_update, LagrangeConfig, LagrangeState};
use crate::cmdp::{
    enumerate_trajectories, rollout_episode, EnvSpec, Environment, TabularModel, Trajectory, Transition,
};
use crate::critic::{CriticConfig, CriticSample, SafetyCritic};
use crate::harness::{EpochRecord, TrainingLog};
use crate::modulation::{clip_cost, weight_grad_of_total, weight_of_total, ModulationConfig, EXPONENT_LIMIT};
use crate::seeding::{self, Stream};
use crate::{Error, Result};

/// How the score-function term weights each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnForm {
    /// `Σ_{k≥t} γ^k r̃_k` with absolute discounting and no baseline; the exact
    /// gradient of the modulated objective.
    Literal,
    /// `Σ_{k≥t} γ^{k−t} r̃_k` minus the batch mean.
    #[default]
    RewardToGo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmpoConfig {
    /// Cost threshold `d`.
    pub threshold: f64,
    /// Initial threshold multiplier `η > 1`.
    pub eta: f64,
    /// Epochs over which `d′` decays from `η·d` to `d`.
    pub e_max: usize,
    /// Weighting base `b > 1`.
    pub base: f64,
    /// Excess cost past `d′` beyond which the weight stops falling.
    pub saturation: f64,
    /// Critic L2 weight `λ`.
    pub l2: f64,
    pub discount: f64,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    pub gradient_steps: usize,
    pub minibatch_size: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    /// Next-action samples for continuous critic expectations.
    pub critic_samples: usize,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub return_form: ReturnForm,
    pub use_critic_grad_term: bool,
    pub use_dynamic_schedule: bool,
}

impl Default for SmpoConfig {
    fn default() -> Self {
        Self {
            threshold: 25.0,
            eta: 2.0,
            e_max: 50,
            base: 3.0,
            saturation: EXPONENT_LIMIT,
            l2: 0.1,
            discount: 0.99,
            steps_per_epoch: 30_000,
            epochs: 100,
            gradient_steps: 40,
            minibatch_size: 256,
            policy_lr: 3e-4,
            critic_lr: 1e-3,
            critic_samples: 4,
            policy_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            return_form: ReturnForm::RewardToGo,
            use_critic_grad_term: true,
            use_dynamic_schedule: true,
        }
    }
}

impl SmpoConfig {
    /// Desk-scale settings for the grid world: short episodes, `d = 5`.
    ///
    /// The weight saturates two cost units past `d′`, and the threshold
    /// starts at `4d` and tightens to `d` over 80 epochs.
    pub fn hazard_grid() -> Self {
        Self {
            threshold: 5.0,
            eta: 4.0,
            e_max: 80,
            saturation: 2.0,
            steps_per_epoch: 2000,
            epochs: 200,
            gradient_steps: 10,
            minibatch_size: 256,
            policy_lr: 1e-3,
            critic_lr: 3e-3,
            policy_hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ModulationConfig::new(self.base, self.threshold)?.with_saturation(self.saturation)?;
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("eta must exceed 1 (got {})", self.eta)));
        }
        if self.e_max == 0 {
            return Err(Error::config("e_max must be at least 1"));
        }
        self.critic_config(self.threshold).validate()?;
        if self.steps_per_epoch == 0 || self.minibatch_size == 0 {
            return Err(Error::config("steps_per_epoch and minibatch_size must be positive"));
        }
        for (name, lr) in [("policy_lr", self.policy_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be positive (got {lr})")));
            }
        }
        if self.policy_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }

    pub fn modulation(&self, d_prime: f64) -> Result<ModulationConfig> {
        ModulationConfig::new(self.base, d_prime)?.with_saturation(self.saturation)
    }

    pub fn critic_config(&self, d_prime: f64) -> CriticConfig {
        CriticConfig {
            l2: self.l2,
            discount: self.discount,
            samples: self.critic_samples,
            threshold: d_prime,
        }
    }
}

/// `d′ = (η − (η − 1)·min(e_max, e_p)/e_max) · d`, or `d` when the schedule is off.
pub fn scheduled_threshold(cfg: &SmpoConfig, e_p: usize) -> f64 {
    if !cfg.use_dynamic_schedule {
        return cfg.threshold;
    }
    let progress = e_p.min(cfg.e_max) as f64 / cfg.e_max as f64;
    (cfg.eta - (cfg.eta - 1.0) * progress) * cfg.threshold
}

/// Fills `critic_estimate` and `stored_total_cost` using the critic and `d′`.
pub fn annotate_trajectory(traj: &mut Trajectory, critic: &SafetyCritic, d_prime: f64) -> Result<()> {
    for t in &mut traj.transitions {
        t.critic_estimate = critic.predict(&t.state, &t.action)?;
        t.stored_total_cost = t.running_cum_cost + clip_cost(t.critic_estimate, d_prime);
    }
    Ok(())
}

/// `grad += weight · ∇_θ Q^c(s_t, a_t)`, where the critic's dependence on `θ`
/// runs through the next-action expectation. No-op for done transitions.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_critic_policy_grad<R: Rng + ?Sized>(
    critic: &SafetyCritic,
    policy: &PolicyFunction,
    t: &Transition,
    discount: f64,
    samples: usize,
    weight: f64,
    grad: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    if t.done || weight == 0.0 {
        return Ok(());
    }
    let w = weight * discount;
    match policy.head() {
        PolicyHead::Softmax => {
            let q = critic.predict_all(&t.next_state)?;
            policy.accumulate_expectation_grad(&t.next_state, &q, w, grad)
        }
        PolicyHead::Gaussian => {
            if samples == 0 {
                return Err(Error::contract("need at least one next-action sample"));
            }
            for _ in 0..samples {
                let a = policy.sample(&t.next_state, rng)?;
                let q = critic.predict(&t.next_state, &a)?;
                policy.accumulate_score(&t.next_state, &a, w * q / samples as f64, grad)?;
            }
            Ok(())
        }
    }
}

/// `∇_θ Q^c(s_t, a_t) = γ · E_{a~π(·|s_{t+1})}[Q^c(s_{t+1}, a) ∇_θ log π(a|s_{t+1})]`.
pub fn critic_policy_grad_term<R: Rng + ?Sized>(
    critic: &SafetyCritic,
    policy: &PolicyFunction,
    t: &Transition,
    discount: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; policy.num_params()];
    accumulate_critic_policy_grad(critic, policy, t, discount, samples, 1.0, &mut g, rng)?;
    Ok(g)
}

/// Per-step reward transformation applied by a training method.
#[derive(Debug, Clone, Copy)]
enum Shaping {
    Modulated(ModulationConfig),
    Plain,
    Penalty(f64),
}

impl Shaping {
    fn reward(&self, t: &Transition) -> f64 {
        match self {
            Shaping::Modulated(m) => weight_of_total(t.stored_total_cost, m) * t.reward,
            Shaping::Plain => t.reward,
            Shaping::Penalty(mu) => t.reward - mu * t.cost,
        }
    }

    fn weight_grad(&self, t: &Transition) -> f64 {
        match self {
            Shaping::Modulated(m) => weight_grad_of_total(t.running_cum_cost, t.critic_estimate, m),
            _ => 0.0,
        }
    }
}

/// Score weight and critic-term coefficient for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StepWeights {
    score: f64,
    critic: f64,
}

/// Per-step weights for a trajectory, before the baseline is subtracted.
fn step_weights(traj: &Trajectory, shaping: &Shaping, form: ReturnForm, discount: f64) -> Vec<StepWeights> {
    let n = traj.len();
    let mut out = vec![
        StepWeights {
            score: 0.0,
            critic: 0.0
        };
        n
    ];
    let mut acc = 0.0;
    for (i, t) in traj.transitions.iter().enumerate().rev() {
        let shaped = shaping.reward(t);
        let discount_t = match form {
            ReturnForm::Literal => discount.powi(i as i32),
            ReturnForm::RewardToGo => 1.0,
        };
        acc = match form {
            ReturnForm::Literal => acc + discount_t * shaped,
            ReturnForm::RewardToGo => shaped + discount * acc,
        };
        out[i] = StepWeights {
            score: acc,
            critic: discount_t * t.reward * shaping.weight_grad(t),
        };
    }
    out
}

/// Probability-weighted policy gradient over annotated trajectories.
///
/// Each trajectory contributes `weight · Σ_t [A_t ∇log π(a_t|s_t) + B_t ∇Q^c(s_t, a_t)]`.
/// With exact enumeration probabilities as weights and [`ReturnForm::Literal`]
/// this is the exact gradient of the modulated objective for a frozen critic.
pub fn weighted_policy_gradient<R: Rng + ?Sized>(
    trajectories: &[(&Trajectory, f64)],
    policy: &PolicyFunction,
    critic: &SafetyCritic,
    cfg: &SmpoConfig,
    d_prime: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if trajectories.iter().all(|(t, _)| t.is_empty()) {
        return Err(Error::EmptyBatch("policy gradient needs at least one transition"));
    }
    let shaping = Shaping::Modulated(cfg.modulation(d_prime)?);
    let weights: Vec<Vec<StepWeights>> = trajectories
        .iter()
        .map(|(t, _)| step_weights(t, &shaping, cfg.return_form, cfg.discount))
        .collect();
    let baseline = match cfg.return_form {
        ReturnForm::Literal => 0.0,
        ReturnForm::RewardToGo => {
            let (mut num, mut den) = (0.0, 0.0);
            for (w, (_, p)) in weights.iter().zip(trajectories) {
                num += p * w.iter().map(|s| s.score).sum::<f64>();
                den += p * w.len() as f64;
            }
            num / den
        }
    };
    let mut grad = vec![0.0; policy.num_params()];
    for ((traj, p), w) in trajectories.iter().zip(&weights) {
        for (t, sw) in traj.transitions.iter().zip(w) {
            policy.accumulate_score(&t.state, &t.action, p * (sw.score - baseline), &mut grad)?;
            if cfg.use_critic_grad_term {
                accumulate_critic_policy_grad(
                    critic,
                    policy,
                    t,
                    cfg.discount,
                    cfg.critic_samples,
                    p * sw.critic,
                    &mut grad,
                    rng,
                )?;
            }
        }
    }
    Ok(grad)
}

/// Trajectory-averaged policy gradient over sampled, annotated trajectories.
pub fn smpo_policy_gradient<R: Rng + ?Sized>(
    trajectories: &[Trajectory],
    policy: &PolicyFunction,
    critic: &SafetyCritic,
    cfg: &SmpoConfig,
    d_prime: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(Error::EmptyBatch("policy gradient needs at least one trajectory"));
    }
    let p = 1.0 / trajectories.len() as f64;
    let weighted: Vec<(&Trajectory, f64)> = trajectories.iter().map(|t| (t, p)).collect();
    weighted_policy_gradient(&weighted, policy, critic, cfg, d_prime, rng)
}

/// Exact expected policy gradient on a tabular model: every trajectory up to
/// `horizon` is enumerated, annotated with the frozen critic and weighted by
/// its probability.
pub fn exact_policy_gradient<M: TabularModel + ?Sized>(
    model: &M,
    policy: &PolicyFunction,
    critic: &SafetyCritic,
    cfg: &SmpoConfig,
    d_prime: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    if policy.head() != PolicyHead::Softmax {
        return Err(Error::contract("exact gradients need a softmax policy"));
    }
    let mut paths = enumerate_trajectories(model, policy, horizon, cfg.discount)?;
    for (traj, _) in &mut paths {
        annotate_trajectory(traj, critic, d_prime)?;
    }
    let weighted: Vec<(&Trajectory, f64)> = paths.iter().map(|(t, p)| (t, *p)).collect();
    // categorical heads never draw samples
    let mut rng = seeding::rng(0, Stream::CriticSamples, &[]);
    weighted_policy_gradient(&weighted, policy, critic, cfg, d_prime, &mut rng)
}

/// Training method driven by [`Trainer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Smpo,
    VanillaPg,
    LagrangianPg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Smpo => "smpo",
            Method::VanillaPg => "vanilla_pg",
            Method::LagrangianPg => "lagrangian_pg",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smpo" => Ok(Method::Smpo),
            "vanilla_pg" => Ok(Method::VanillaPg),
            "lagrangian_pg" => Ok(Method::LagrangianPg),
            other => Err(Error::config(format!(
                "unknown method {other:?} (expected smpo, vanilla_pg or lagrangian_pg)"
            ))),
        }
    }
}

/// On-policy data for one epoch.
#[derive(Debug, Clone)]
pub struct EpochBuffer {
    /// Epoch whose policy generated every transition.
    pub epoch: usize,
    pub transitions: Vec<Transition>,
    weights: Vec<StepWeights>,
    episodes: usize,
    reward_sum: f64,
    cost_sum: f64,
}

impl EpochBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub policy: PolicyFunction,
    pub critic: Option<SafetyCritic>,
}

/// Shared epoch loop for SMPO and the policy-gradient baselines.
pub struct Trainer {
    env: Box<dyn Environment>,
    spec: EnvSpec,
    method: Method,
    cfg: SmpoConfig,
    seed: u64,
    policy: PolicyFunction,
    critic: Option<SafetyCritic>,
    policy_opt: Adam,
    critic_opt: Option<Adam>,
    lagrange: Option<(LagrangeConfig, LagrangeState)>,
    epoch: usize,
    env_steps: u64,
    log: TrainingLog,
}

impl Trainer {
    pub fn new(env: Box<dyn Environment>, method: Method, cfg: SmpoConfig, seed: u64) -> Result<Self> {
        Self::with_lagrange(env, method, cfg, LagrangeConfig::default(), seed)
    }

    pub fn with_lagrange(
        env: Box<dyn Environment>,
        method: Method,
        cfg: SmpoConfig,
        lagrange: LagrangeConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let spec = env.spec();
        let obs = spec.observation_dim;
        let policy = PolicyFunction::new(
            obs,
            &cfg.policy_hidden,
            spec.action_space,
            seeding::derive(seed, &[Stream::Init as u64, 0]),
        );
        let critic = (method == Method::Smpo).then(|| {
            SafetyCritic::new(
                obs,
                &cfg.critic_hidden,
                spec.action_space,
                seeding::derive(seed, &[Stream::Init as u64, 1]),
            )
        });
        let lagrange = if method == Method::LagrangianPg {
            lagrange.validate()?;
            Some((lagrange, lagrange.initial_state()))
        } else {
            None
        };
        Ok(Self {
            policy_opt: Adam::new(policy.num_params(), AdamConfig::default()),
            critic_opt: critic
                .as_ref()
                .map(|c| Adam::new(c.num_params(), AdamConfig::default())),
            env,
            spec,
            method,
            cfg,
            seed,
            policy,
            critic,
            lagrange,
            epoch: 0,
            env_steps: 0,
            log: TrainingLog::default(),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &SmpoConfig {
        &self.cfg
    }

    pub fn env_spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn policy(&self) -> &PolicyFunction {
        &self.policy
    }

    pub fn critic(&self) -> Option<&SafetyCritic> {
        self.critic.as_ref()
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn multiplier(&self) -> Option<f64> {
        self.lagrange.map(|(_, s)| s.multiplier)
    }

    /// Replaces the policy before training starts.
    pub fn set_policy(&mut self, policy: PolicyFunction) -> Result<()> {
        if policy.num_params() != self.policy.num_params() || policy.action_space() != self.spec.action_space {
            return Err(Error::contract("replacement policy has a different architecture"));
        }
        self.policy_opt = Adam::new(policy.num_params(), AdamConfig::default());
        self.policy = policy;
        Ok(())
    }

    /// Replaces the critic before training starts (SMPO only).
    pub fn set_critic(&mut self, critic: SafetyCritic) -> Result<()> {
        let Some(current) = &self.critic else {
            return Err(Error::contract(format!("{} has no safety critic", self.method.name())));
        };
        if critic.num_params() != current.num_params() || critic.action_space() != self.spec.action_space {
            return Err(Error::contract("replacement critic has a different architecture"));
        }
        self.critic_opt = Some(Adam::new(critic.num_params(), AdamConfig::default()));
        self.critic = Some(critic);
        Ok(())
    }

    /// Threshold in force for the next epoch.
    pub fn current_threshold(&self) -> f64 {
        match self.method {
            Method::Smpo => scheduled_threshold(&self.cfg, self.epoch),
            _ => self.cfg.threshold,
        }
    }

    fn shaping(&self, d_prime: f64) -> Result<Shaping> {
        Ok(match self.method {
            Method::Smpo => Shaping::Modulated(self.cfg.modulation(d_prime)?),
            Method::VanillaPg => Shaping::Plain,
            Method::LagrangianPg => Shaping::Penalty(self.multiplier().unwrap_or(0.0)),
        })
    }

    /// Collects at least `steps_per_epoch` steps as whole episodes.
    pub fn collect(&mut self, d_prime: f64) -> Result<EpochBuffer> {
        let shaping = self.shaping(d_prime)?;
        let mut buf = EpochBuffer {
            epoch: self.epoch,
            transitions: Vec::with_capacity(self.cfg.steps_per_epoch + self.spec.max_episode_steps),
            weights: Vec::new(),
            episodes: 0,
            reward_sum: 0.0,
            cost_sum: 0.0,
        };
        while buf.transitions.len() < self.cfg.steps_per_epoch {
            let mut rng = seeding::rng(self.seed, Stream::Episode, &[self.epoch as u64, buf.episodes as u64]);
            let mut traj = rollout_episode(&mut *self.env, &self.policy, &mut rng, self.spec.max_episode_steps)?;
            if traj.is_empty() {
                return Err(Error::contract("environment produced an empty episode"));
            }
            if let Some(critic) = &self.critic {
                annotate_trajectory(&mut traj, critic, d_prime)?;
            }
            buf.weights
                .extend(step_weights(&traj, &shaping, self.cfg.return_form, self.cfg.discount));
            buf.episodes += 1;
            buf.reward_sum += traj.episode_reward_undiscounted();
            buf.cost_sum += traj.episode_cost_undiscounted;
            buf.transitions.extend(traj.transitions);
        }
        if self.cfg.return_form == ReturnForm::RewardToGo {
            let mean = buf.weights.iter().map(|w| w.score).sum::<f64>() / buf.weights.len() as f64;
            for w in &mut buf.weights {
                w.score -= mean;
            }
        }
        Ok(buf)
    }

    /// One critic regression step on `batch`; returns the loss before the update.
    fn critic_step(&mut self, buf: &EpochBuffer, batch: &[usize], d_prime: f64, step: usize) -> Result<Option<f64>> {
        let (Some(critic), Some(opt)) = (self.critic.as_mut(), self.critic_opt.as_mut()) else {
            return Ok(None);
        };
        let ccfg = self.cfg.critic_config(d_prime);
        let mut rng = seeding::rng(self.seed, Stream::CriticSamples, &[self.epoch as u64, step as u64, 0]);
        let targets: Vec<f64> = batch
            .iter()
            .map(|&i| critic.target(&buf.transitions[i], &self.policy, &ccfg, &mut rng))
            .collect::<Result<_>>()?;
        let samples: Vec<CriticSample> = batch
            .iter()
            .zip(&targets)
            .map(|(&i, &target)| CriticSample {
                state: &buf.transitions[i].state,
                action: &buf.transitions[i].action,
                target,
            })
            .collect();
        let (loss, grad) = critic.loss_and_grad(&samples, ccfg.l2)?;
        let mut params = critic.params().to_vec();
        opt.step(&mut params, &grad, self.cfg.critic_lr)?;
        critic.set_params(&params)?;
        Ok(Some(loss))
    }

    /// Minibatch estimate of the policy gradient (ascent direction).
    pub fn policy_gradient(&self, buf: &EpochBuffer, batch: &[usize], step: usize) -> Result<Vec<f64>> {
        if buf.epoch != self.epoch {
            return Err(Error::contract(format!(
                "buffer from epoch {} used in epoch {}",
                buf.epoch, self.epoch
            )));
        }
        if batch.is_empty() {
            return Err(Error::EmptyBatch("policy minibatch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.policy.num_params()];
        let mut rng = seeding::rng(self.seed, Stream::CriticSamples, &[self.epoch as u64, step as u64, 1]);
        for &i in batch {
            let t = &buf.transitions[i];
            let w = buf.weights[i];
            self.policy
                .accumulate_score(&t.state, &t.action, scale * w.score, &mut grad)?;
            if let (Some(critic), true) = (&self.critic, self.cfg.use_critic_grad_term) {
                accumulate_critic_policy_grad(
                    critic,
                    &self.policy,
                    t,
                    self.cfg.discount,
                    self.cfg.critic_samples,
                    scale * w.critic,
                    &mut grad,
                    &mut rng,
                )?;
            }
        }
        Ok(grad)
    }

    /// Runs one epoch; `on_update` sees the policy after every parameter update.
    pub fn run_epoch_observed(&mut self, on_update: &mut dyn FnMut(&PolicyFunction)) -> Result<EpochRecord> {
        let d_prime = self.current_threshold();
        let buf = self.collect(d_prime)?;
        let mut rng = seeding::rng(self.seed, Stream::Minibatch, &[self.epoch as u64]);
        let size = self.cfg.minibatch_size.min(buf.len());
        let mut critic_loss = 0.0;
        for step in 0..self.cfg.gradient_steps {
            let batch = index::sample(&mut rng, buf.len(), size).into_vec();
            if let Some(loss) = self.critic_step(&buf, &batch, d_prime, step)? {
                critic_loss += loss / self.cfg.gradient_steps as f64;
            }
            let grad = self.policy_gradient(&buf, &batch, step)?;
            let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
            let (opt, lr) = (&mut self.policy_opt, self.cfg.policy_lr);
            self.policy.update_params(|p| opt.step(p, &ascent, lr))?;
            on_update(&self.policy);
        }

        let episodes = buf.episodes as f64;
        let avg_cost = buf.cost_sum / episodes;
        let multiplier = self.multiplier();
        if let Some((lcfg, state)) = &mut self.lagrange {
            if !lcfg.frozen {
                *state = lagrange_update(*state, avg_cost, self.cfg.threshold)?;
            }
        }
        self.env_steps += buf.len() as u64;
        let record = EpochRecord {
            epoch: self.epoch,
            env_steps: self.env_steps,
            avg_episode_reward: buf.reward_sum / episodes,
            avg_episode_cost: avg_cost,
            d_prime,
            critic_loss: self.critic.as_ref().map(|_| critic_loss),
            multiplier,
        };
        log::debug!(
            "{} epoch {}: reward {:.3} cost {:.3} d' {:.3}",
            self.method.name(),
            record.epoch,
            record.avg_episode_reward,
            record.avg_episode_cost,
            record.d_prime
        );
        self.log.push(record.clone())?;
        self.epoch += 1;
        Ok(record)
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        self.run_epoch_observed(&mut |_| {})
    }

    /// Runs the configured number of epochs.
    pub fn train_observed(mut self, on_update: &mut dyn FnMut(&PolicyFunction)) -> Result<TrainOutcome> {
        for _ in 0..self.cfg.epochs {
            self.run_epoch_observed(on_update)?;
        }
        Ok(TrainOutcome {
            log: self.log,
            policy: self.policy,
            critic: self.critic,
        })
    }

    pub fn train(self) -> Result<TrainOutcome> {
        self.train_observed(&mut |_| {})
    }
}

pub fn smpo_train(env: Box<dyn Environment>, cfg: SmpoConfig, seed: u64) -> Result<TrainOutcome> {
    Trainer::new(env, Method::Smpo, cfg, seed)?.train()
}
