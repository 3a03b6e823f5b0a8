use std::fmt;
use std::sync::Arc;

use statrs::function::erf::erfc;

use super::{clamp_likelihood, TimePredictor};
use crate::alphabet::{MaskedSequence, SequenceSpace};
use crate::error::{Error, Result};

type Moment = Arc<dyn Fn(&MaskedSequence) -> f64 + Send + Sync>;

/// Regression ensemble turned into `p(y >= y* | x_t)` by a Gaussian tail.
#[derive(Clone)]
pub struct ThresholdRegressor {
    space: SequenceSpace,
    mu: Moment,
    sigma: Moment,
    y_star: f64,
}

impl fmt::Debug for ThresholdRegressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThresholdRegressor").field("y_star", &self.y_star).finish_non_exhaustive()
    }
}

impl ThresholdRegressor {
    pub fn new(
        space: SequenceSpace,
        mu: impl Fn(&MaskedSequence) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(&MaskedSequence) -> f64 + Send + Sync + 'static,
        y_star: f64,
    ) -> Self {
        Self {
            space,
            mu: Arc::new(mu),
            sigma: Arc::new(sigma),
            y_star,
        }
    }

    pub fn y_star(&self) -> f64 {
        self.y_star
    }
}

/// `1 - Phi((y* - mu) / sigma)`, unclamped.
pub fn threshold_likelihood(reg: &ThresholdRegressor, xt: &MaskedSequence) -> Result<f64> {
    let mu = (reg.mu)(xt);
    let sigma = (reg.sigma)(xt);
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("ensemble spread must be positive, got {sigma}")));
    }
    let z = (reg.y_star - mu) / sigma;
    Ok(0.5 * erfc(z / std::f64::consts::SQRT_2))
}

impl TimePredictor for ThresholdRegressor {
    fn space(&self) -> SequenceSpace {
        self.space
    }

    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
        threshold_likelihood(self, xt).map(clamp_likelihood)
    }
}
