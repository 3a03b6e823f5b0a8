//! Interpolation schedules `kappa(t)`: the probability that a position is
//! already unmasked at time `t`. Equivalently, the CDF of a position's jump time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `kappa(t) = t`.
    #[default]
    Linear,
    /// `kappa(t) = 1 - (1 - t)^exponent`.
    Power { exponent: f64 },
}

impl Schedule {
    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::Domain(format!("power schedule exponent must be > 0, got {exponent}")));
        }
        Ok(Schedule::Power { exponent })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Linear => Ok(()),
            Schedule::Power { exponent } => Schedule::power(exponent).map(|_| ()),
        }
    }

    pub fn kappa(&self, t: f64) -> f64 {
        match *self {
            Schedule::Linear => t,
            Schedule::Power { exponent } => 1.0 - (1.0 - t).powf(exponent),
        }
    }

    pub fn kappa_dot(&self, t: f64) -> f64 {
        match *self {
            Schedule::Linear => 1.0,
            Schedule::Power { exponent } => exponent * (1.0 - t).powf(exponent - 1.0),
        }
    }

    /// `kappa_dot(t) / (1 - kappa(t))`, the per-position unmasking hazard.
    pub fn hazard(&self, t: f64) -> f64 {
        match *self {
            Schedule::Linear => 1.0 / (1.0 - t),
            Schedule::Power { exponent } => exponent / (1.0 - t),
        }
    }

    /// Quantile function of the jump-time law: `kappa^{-1}(u)`.
    pub fn inverse(&self, u: f64) -> f64 {
        match *self {
            Schedule::Linear => u,
            Schedule::Power { exponent } => 1.0 - (1.0 - u).powf(1.0 / exponent),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedules() -> Vec<Schedule> {
        vec![
            Schedule::Linear,
            Schedule::power(1.5).unwrap(),
            Schedule::power(2.0).unwrap(),
            Schedule::power(3.0).unwrap(),
        ]
    }

    #[test]
    fn boundary_values_and_monotonicity() {
        for s in schedules() {
            assert_eq!(s.kappa(0.0), 0.0);
            assert_eq!(s.kappa(1.0), 1.0);
            let mut prev = 0.0;
            for k in 1..=1000 {
                let v = s.kappa(k as f64 / 1000.0);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for s in schedules() {
            for k in 1..1000 {
                let t = k as f64 / 1000.0;
                let fd = (s.kappa(t + h) - s.kappa(t - h)) / (2.0 * h);
                assert!((fd - s.kappa_dot(t)).abs() < 1e-6, "{s:?} at {t}: {fd} vs {}", s.kappa_dot(t));
            }
        }
    }

    #[test]
    fn hazard_and_inverse() {
        for s in schedules() {
            for k in 0..100 {
                let t = k as f64 / 100.0;
                let h = s.kappa_dot(t) / (1.0 - s.kappa(t));
                assert!((h - s.hazard(t)).abs() < 1e-9 * h.max(1.0));
                assert!((s.inverse(s.kappa(t)) - t).abs() < 1e-12);
            }
        }
        assert!(Schedule::power(0.0).is_err());
        assert!(Schedule::power(f64::NAN).is_err());
    }
}
