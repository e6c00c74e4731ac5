//! Cost-aware reward modulation.
//!
//! The weight of a reward depends on the total estimated episode cost
//! `x = Σ_{k<t} c_k + clip(Q^c(s_t, a_t), 0, d)`:
//!
//! ```text
//! f(x) = b^d / (b^d − 1) · (1 − b^(x − d))
//! ```
//!
//! so `f(0) = 1`, `f(d) = 0`, and `f` falls off exponentially past `d`.
//! The modulated reward is `f(x) · r`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default clamp on the exponent: `(x − d)·ln b` stays within `±EXPONENT_LIMIT · ln b`.
pub const EXPONENT_LIMIT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationConfig {
    /// Base `b > 1`.
    pub base: f64,
    /// Threshold `d > 0`; the scheduled `d′` at training time.
    pub threshold: f64,
    /// Magnitude `N` of the penalty branch in [`piecewise_reference`].
    pub penalty: f64,
    /// Excess `x − d` past which `f` stops falling (and `∂f/∂q` is zero).
    pub saturation: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            base: 3.0,
            threshold: 25.0,
            penalty: 1e6,
            saturation: EXPONENT_LIMIT,
        }
    }
}

impl ModulationConfig {
    pub fn new(base: f64, threshold: f64) -> Result<Self> {
        let cfg = Self {
            base,
            threshold,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_saturation(self, saturation: f64) -> Result<Self> {
        let cfg = Self { saturation, ..self };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_threshold(self, threshold: f64) -> Result<Self> {
        let cfg = Self { threshold, ..self };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base > 1.0 && self.base.is_finite()) {
            return Err(Error::config(format!("b must exceed 1 (got {})", self.base)));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::config(format!("d must be positive (got {})", self.threshold)));
        }
        if !(self.penalty > 0.0) {
            return Err(Error::config(format!("N must be positive (got {})", self.penalty)));
        }
        if !(self.saturation > 0.0 && self.saturation <= EXPONENT_LIMIT) {
            return Err(Error::config(format!(
                "saturation must lie in (0, {EXPONENT_LIMIT}] (got {})",
                self.saturation
            )));
        }
        Ok(())
    }

    /// `(x − d)·ln b`, clamped.
    fn exponent(&self, total: f64) -> f64 {
        let ln_b = self.base.ln();
        ((total - self.threshold) * ln_b).clamp(-EXPONENT_LIMIT * ln_b, self.saturation * ln_b)
    }

    /// Lowest value `f` can take.
    pub fn floor(&self) -> f64 {
        -(self.saturation * self.base.ln()).exp_m1() / self.normalizer()
    }

    /// `1 − b^{−d}`, i.e. the reciprocal of `b^d / (b^d − 1)`.
    fn normalizer(&self) -> f64 {
        -(-self.threshold * self.base.ln()).exp_m1()
    }
}

/// `max(0, min(d, q))`.
pub fn clip_cost(q: f64, threshold: f64) -> f64 {
    q.min(threshold).max(0.0)
}

/// Weight for a running cost and an already-clipped critic value.
pub fn weight(cum_cost: f64, q_clipped: f64, cfg: &ModulationConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(weight_of_total(cum_cost + q_clipped, cfg))
}

/// `f` evaluated at a total estimated cost. `cfg` must be valid.
pub fn weight_of_total(total: f64, cfg: &ModulationConfig) -> f64 {
    // (1 − b^{x−d}) / (1 − b^{−d}) written with expm1 so f(0) = 1 and f(d) = 0 exactly
    -cfg.exponent(total).exp_m1() / cfg.normalizer()
}

/// `∂f/∂q` at the clipped critic value; zero when `q_raw` lies outside `[0, d]`.
pub fn weight_grad_q(cum_cost: f64, q_raw: f64, cfg: &ModulationConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(weight_grad_of_total(cum_cost, q_raw, cfg))
}

pub fn weight_grad_of_total(cum_cost: f64, q_raw: f64, cfg: &ModulationConfig) -> f64 {
    if !(0.0..=cfg.threshold).contains(&q_raw) {
        return 0.0;
    }
    let ln_b = cfg.base.ln();
    let arg = (cum_cost + q_raw - cfg.threshold) * ln_b;
    if arg < -EXPONENT_LIMIT * ln_b || arg > cfg.saturation * ln_b {
        // saturated region of the clamped exponent is flat
        return 0.0;
    }
    -ln_b * arg.exp() / cfg.normalizer()
}

/// `w · r`.
pub fn modulated_reward(reward: f64, weight: f64) -> f64 {
    weight * reward
}

/// Hard-threshold modulation: `r` if `cum_cost + q_raw ≤ d`, else `−N`.
pub fn piecewise_reference(reward: f64, cum_cost: f64, q_raw: f64, cfg: &ModulationConfig) -> f64 {
    if cum_cost + q_raw <= cfg.threshold {
        reward
    } else {
        -cfg.penalty
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(b: f64, d: f64) -> ModulationConfig {
        ModulationConfig::new(b, d).unwrap()
    }

    #[test]
    fn anchors() {
        for b in [2.0, 3.0, 4.0, 10.0] {
            for d in [1.0, 5.0, 25.0] {
                let c = cfg(b, d);
                assert!((weight(0.0, 0.0, &c).unwrap() - 1.0).abs() < 1e-12);
                assert!(weight(d, 0.0, &c).unwrap().abs() < 1e-12);
                assert!(weight(0.0, d, &c).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn direct_evaluations() {
        let c = cfg(3.0, 25.0);
        let past = 3f64.powi(25) / (3f64.powi(25) - 1.0) * (1.0 - 3.0);
        assert!((weight(26.0, 0.0, &c).unwrap() - past).abs() < 1e-12);
        assert!((weight(26.0, 0.0, &c).unwrap() + 2.000000000002).abs() < 1e-9);
        assert!((weight(20.0, 0.0, &c).unwrap() - 0.995_884_773).abs() < 1e-8);
    }

    #[test]
    fn gradient_values() {
        let c = cfg(3.0, 25.0);
        let at_d = weight_grad_q(0.0, 25.0, &c).unwrap();
        let expected = -(3f64.ln()) * 3f64.powi(25) / (3f64.powi(25) - 1.0);
        assert!((at_d - expected).abs() < 1e-12);
        assert!((at_d + 1.098_61).abs() < 1e-5);

        let at_zero = weight_grad_q(0.0, 0.0, &c).unwrap();
        let expected = -(3f64.ln()) * 3f64.powi(-25) * 3f64.powi(25) / (3f64.powi(25) - 1.0);
        assert!(((at_zero - expected) / expected).abs() < 1e-10);
        assert!((at_zero + 1.297e-12).abs() < 1e-14);

        assert_eq!(weight_grad_q(0.0, 30.0, &c).unwrap(), 0.0);
        assert_eq!(weight_grad_q(0.0, -1.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn saturation_floors_the_weight() {
        let c = cfg(3.0, 5.0).with_saturation(2.0).unwrap();
        let floor = (1.0 - 9.0) / (1.0 - 3f64.powi(-5));
        assert!((c.floor() - floor).abs() < 1e-12);
        assert!((weight(7.0, 0.0, &c).unwrap() - floor).abs() < 1e-12);
        assert_eq!(weight(12.0, 0.0, &c).unwrap(), c.floor());
        assert_eq!(weight(4.0, 0.0, &c).unwrap(), weight(4.0, 0.0, &cfg(3.0, 5.0)).unwrap());
        assert_eq!(weight_grad_q(6.0, 2.0, &c).unwrap(), 0.0);
        assert!(weight_grad_q(6.0, 0.5, &c).unwrap() < 0.0);
        assert!(cfg(3.0, 5.0).with_saturation(0.0).is_err());
        assert!(cfg(3.0, 5.0).with_saturation(61.0).is_err());
    }

    #[test]
    fn config_errors() {
        assert!(ModulationConfig::new(1.0, 5.0).is_err());
        assert!(ModulationConfig::new(0.5, 5.0)
            .unwrap_err()
            .to_string()
            .contains("b must exceed 1"));
        assert!(ModulationConfig::new(3.0, 0.0).is_err());
        let bad = ModulationConfig {
            base: 0.5,
            ..cfg(3.0, 5.0)
        };
        assert!(weight(0.0, 0.0, &bad).is_err());
        assert!(weight_grad_q(0.0, 0.0, &bad).is_err());
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_cost(-1.0, 25.0), 0.0);
        assert_eq!(clip_cost(30.0, 25.0), 25.0);
        assert_eq!(clip_cost(10.0, 25.0), 10.0);
    }

    #[test]
    fn modulated_and_reference() {
        assert_eq!(modulated_reward(2.0, 1.0), 2.0);
        assert_eq!(modulated_reward(2.0, 0.0), 0.0);
        assert_eq!(modulated_reward(2.0, -2.0), -4.0);
        let c = cfg(3.0, 25.0);
        assert_eq!(piecewise_reference(5.0, 10.0, 0.0, &c), 5.0);
        assert_eq!(piecewise_reference(5.0, 20.0, 6.0, &c), -1e6);
        assert_eq!(piecewise_reference(5.0, 20.0, 5.0, &c), 5.0);
    }

    #[test]
    fn near_threshold_preservation_bound() {
        let c = cfg(3.0, 25.0);
        let scale = 3f64.powi(25) / (3f64.powi(25) - 1.0);
        for k in 1..=10 {
            for i in 0..=100 {
                let total = (25.0 - k as f64) * i as f64 / 100.0;
                let w = weight_of_total(total, &c);
                assert!(1.0 - w <= 3f64.powi(-k) * scale + 1e-15);
            }
        }
    }

    #[test]
    fn extreme_totals_saturate_without_overflow() {
        let c = cfg(10.0, 5.0);
        let w = weight_of_total(1e9, &c);
        assert!(w.is_finite() && w < 0.0);
        assert_eq!(weight_of_total(1e9, &c), weight_of_total(1e10, &c));
    }

    proptest! {
        #[test]
        fn strictly_decreasing(a in 0.0f64..35.0, gap in 0.01f64..10.0) {
            let c = cfg(3.0, 25.0);
            prop_assert!(weight_of_total(a, &c) > weight_of_total(a + gap, &c));
        }

        #[test]
        fn never_exceeds_the_reward(r in 0.0f64..10.0, total in 0.0f64..40.0) {
            let c = cfg(3.0, 25.0);
            let m = modulated_reward(r, weight_of_total(total, &c));
            prop_assert!(m <= r);
            if r > 0.0 && total >= 0.5 {
                prop_assert!(m < r);
            }
        }

        #[test]
        fn approximates_the_hard_threshold(r in 1e-6f64..10.0, total in 0.0f64..40.0) {
            let c = cfg(3.0, 25.0);
            let m = modulated_reward(r, weight_of_total(total, &c));
            let reference = piecewise_reference(r, total, 0.0, &c);
            if total <= 20.0 {
                prop_assert!((m - reference).abs() <= r * 3f64.powi(-5));
            }
            if total > 25.0 {
                prop_assert!(m < 0.0);
            }
        }

        #[test]
        fn clip_stays_in_range(q in -1e12f64..1e12, d in 1e-3f64..1e3) {
            let v = clip_cost(q, d);
            prop_assert!((0.0..=d).contains(&v));
        }

        #[test]
        fn gradient_matches_central_differences(total in 19.0f64..28.0, frac in 0.02f64..0.98) {
            // Literal form of the weighting function as the oracle. Totals stay
            // within a few units of d, where the weight is not rounded to 1 and
            // a central difference resolves the slope.
            let (b, d) = (3.0f64, 25.0f64);
            let literal = |x: f64| b.powf(d) / (b.powf(d) - 1.0) * (1.0 - b.powf(x - d));
            let q = frac * total.min(d);
            let cum = total - q;
            let h = 1e-5;
            let numeric = (literal(total + h) - literal(total - h)) / (2.0 * h);
            let analytic = weight_grad_of_total(cum, q, &cfg(b, d));
            prop_assert!((numeric - analytic).abs() / analytic.abs() <= 1e-8);
        }
    }
}
