use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{validate_episode_params, Action, ActionSpace, EnvSpec, Environment, StepOutcome};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hazard {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointHazardParams {
    /// Positions are confined to `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub hazards: Vec<Hazard>,
    /// Start positions are drawn uniformly from this box: `[x_lo, x_hi, y_lo, y_hi]`.
    pub start_box: [f64; 4],
    /// Displacement per unit of velocity command.
    pub step_size: f64,
    pub max_episode_steps: usize,
    pub discount: f64,
}

impl Default for PointHazardParams {
    fn default() -> Self {
        Self {
            half_width: 2.0,
            goal: [1.5, 1.5],
            goal_radius: 0.3,
            hazards: vec![
                Hazard {
                    center: [0.0, 0.0],
                    radius: 0.6,
                },
                Hazard {
                    center: [1.2, 0.2],
                    radius: 0.4,
                },
            ],
            start_box: [-1.8, -1.2, -1.8, -1.2],
            step_size: 0.1,
            max_episode_steps: 200,
            discount: 0.99,
        }
    }
}

/// Continuous point robot that must reach a goal disc while avoiding hazard discs.
///
/// Observation: `[x, y, goal_x − x, goal_y − y]`. Action: 2-D velocity command,
/// each component in `[-1, 1]` (out-of-range commands are clamped).
#[derive(Debug, Clone)]
pub struct PointHazard {
    params: PointHazardParams,
    pos: [f64; 2],
}

impl PointHazard {
    pub fn new(params: PointHazardParams) -> Result<Self> {
        validate_episode_params(params.max_episode_steps, params.discount)?;
        if params.half_width <= 0.0 || params.goal_radius <= 0.0 || params.step_size <= 0.0 {
            return Err(Error::config("half_width, goal_radius and step_size must be positive"));
        }
        if params.hazards.iter().any(|h| h.radius <= 0.0) {
            return Err(Error::config("hazard radii must be positive"));
        }
        let [x0, x1, y0, y1] = params.start_box;
        if !(x0 <= x1 && y0 <= y1) {
            return Err(Error::config("start_box must be [x_lo, x_hi, y_lo, y_hi]"));
        }
        let pos = [x0, y0];
        Ok(Self { params, pos })
    }

    pub fn params(&self) -> &PointHazardParams {
        &self.params
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn goal_distance(&self, p: [f64; 2]) -> f64 {
        let g = self.params.goal;
        (p[0] - g[0]).hypot(p[1] - g[1])
    }

    pub fn in_hazard(&self, p: [f64; 2]) -> bool {
        self.params
            .hazards
            .iter()
            .any(|h| (p[0] - h.center[0]).hypot(p[1] - h.center[1]) < h.radius)
    }

    fn observe(&self) -> Vec<f64> {
        let g = self.params.goal;
        vec![self.pos[0], self.pos[1], g[0] - self.pos[0], g[1] - self.pos[1]]
    }
}

impl Environment for PointHazard {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 4,
            action_space: ActionSpace::Continuous {
                dim: 2,
                low: -1.0,
                high: 1.0,
            },
            max_episode_steps: self.params.max_episode_steps,
            discount: self.params.discount,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [x0, x1, y0, y1] = self.params.start_box;
        self.pos = [
            x0 + (x1 - x0) * rng.random::<f64>(),
            y0 + (y1 - y0) * rng.random::<f64>(),
        ];
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        self.spec().action_space.validate(action)?;
        let Action::Continuous(v) = action else {
            unreachable!("validated continuous action")
        };
        let before = self.goal_distance(self.pos);
        let hw = self.params.half_width;
        for (p, u) in self.pos.iter_mut().zip(v) {
            *p = (*p + self.params.step_size * u.clamp(-1.0, 1.0)).clamp(-hw, hw);
        }
        let after = self.goal_distance(self.pos);
        let cost = if self.in_hazard(self.pos) { 1.0 } else { 0.0 };
        let mut reward = (before - after).max(0.0) * 10.0;
        let terminal = after < self.params.goal_radius;
        if terminal {
            reward += 10.0;
        }
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            cost,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seed_deterministic() {
        let mut env = PointHazard::new(PointHazardParams::default()).unwrap();
        let a = env.reset(7);
        let b = env.reset(7);
        let c = env.reset(8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn hazard_and_progress_accounting() {
        let mut env = PointHazard::new(PointHazardParams::default()).unwrap();
        env.reset(0);
        env.pos = [-0.65, 0.0];
        let out = env.step(&Action::Continuous(vec![1.0, 0.0])).unwrap();
        assert_eq!(out.cost, 1.0);
        assert!(out.reward > 0.0);

        // moving away from the goal earns nothing
        env.pos = [-1.5, -1.5];
        let out = env.step(&Action::Continuous(vec![-1.0, -1.0])).unwrap();
        assert_eq!((out.reward, out.cost), (0.0, 0.0));

        env.pos = [1.5, 1.25];
        let out = env.step(&Action::Continuous(vec![0.0, 1.0])).unwrap();
        assert!(out.terminal);
        assert!(out.reward >= 10.0);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut env = PointHazard::new(PointHazardParams::default()).unwrap();
        env.reset(0);
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
        assert!(env.step(&Action::Discrete(0)).is_err());
    }
}
