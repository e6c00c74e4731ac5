//! Policy-gradient baselines: unconstrained, and Lagrangian-penalized with a
//! dual-ascent multiplier.
//!
//! Both run through the same [`Trainer`] as SMPO. The unconstrained method
//! uses raw rewards and no critic. The Lagrangian method trains on
//! `r_t − μ·c_t` and moves `μ` once per epoch on the mean episode cost.

use serde::{Deserialize, Serialize};

use crate::cmdp::Environment;
use crate::smpo::{Method, SmpoConfig, TrainOutcome, Trainer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagrangeConfig {
    pub initial_multiplier: f64,
    pub multiplier_lr: f64,
    /// Keep `μ` at its initial value.
    pub frozen: bool,
}

impl Default for LagrangeConfig {
    fn default() -> Self {
        Self {
            initial_multiplier: 0.0,
            multiplier_lr: 0.05,
            frozen: false,
        }
    }
}

impl LagrangeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_multiplier >= 0.0 && self.initial_multiplier.is_finite()) {
            return Err(Error::config("initial multiplier must be non-negative"));
        }
        if !(self.multiplier_lr > 0.0 && self.multiplier_lr.is_finite()) {
            return Err(Error::config("multiplier step size must be positive"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> LagrangeState {
        LagrangeState {
            multiplier: self.initial_multiplier,
            step: self.multiplier_lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeState {
    /// `μ ≥ 0`.
    pub multiplier: f64,
    pub step: f64,
}

/// `μ′ = max(0, μ + step · (mean_episode_cost − d))`.
pub fn lagrange_update(state: LagrangeState, mean_episode_cost: f64, d: f64) -> Result<LagrangeState> {
    if !(mean_episode_cost >= 0.0 && mean_episode_cost.is_finite()) {
        return Err(Error::contract(format!(
            "mean episode cost must be finite and non-negative (got {mean_episode_cost})"
        )));
    }
    Ok(LagrangeState {
        multiplier: (state.multiplier + state.step * (mean_episode_cost - d)).max(0.0),
        ..state
    })
}

pub fn vanilla_pg_train(env: Box<dyn Environment>, cfg: SmpoConfig, seed: u64) -> Result<TrainOutcome> {
    Trainer::new(env, Method::VanillaPg, cfg, seed)?.train()
}

pub fn lagrangian_pg_train(
    env: Box<dyn Environment>,
    cfg: SmpoConfig,
    lagrange: LagrangeConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    Trainer::with_lagrange(env, Method::LagrangianPg, cfg, lagrange, seed)?.train()
}
