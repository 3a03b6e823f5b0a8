//! Property predictors `p(y | x_t)` evaluated on partially masked sequences.
//!
//! Every likelihood leaving a [`TimePredictor`] is clamped to
//! `[LIKELIHOOD_FLOOR, 1]` so guidance ratios never divide by zero.

mod classifier;
mod exact;
mod pom;
mod product;
mod threshold;

use std::sync::Arc;

pub use classifier::{train_noisy_classifier, ClassifierConfig, Link, NoisyClassifier};
pub use exact::{exact_marginal_predictor, ExactMarginalPredictor};
pub use pom::{pom_exact_expectation, pom_predictor, PomPredictor};
pub use product::{product_predictor, ProductPredictor};
pub use threshold::{threshold_likelihood, ThresholdRegressor};

use crate::alphabet::{MaskedSequence, SequenceSpace, TokenSequence};
use crate::error::{Error, Result};
use crate::LIKELIHOOD_FLOOR;

/// `p(y | x)` on clean sequences.
pub trait CleanPredictor: Send + Sync {
    fn likelihood(&self, x: &TokenSequence) -> f64;
}

impl<F> CleanPredictor for F
where
    F: Fn(&TokenSequence) -> f64 + Send + Sync,
{
    fn likelihood(&self, x: &TokenSequence) -> f64 {
        self(x)
    }
}

/// Clean predictor stored as one value per sequence index.
#[derive(Clone, Debug, PartialEq)]
pub struct TableCleanPredictor {
    space: SequenceSpace,
    values: Vec<f64>,
}

impl TableCleanPredictor {
    pub fn new(space: SequenceSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.num_states() {
            return Err(Error::Shape(format!("{} values for {} states", values.len(), space.num_states())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("clean likelihood {v} outside [0, 1]")));
        }
        Ok(Self { space, values })
    }

    pub fn from_fn(space: SequenceSpace, f: impl Fn(&TokenSequence) -> f64) -> Result<Self> {
        Self::new(space, space.iter().map(|x| f(&x)).collect())
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl CleanPredictor for TableCleanPredictor {
    fn likelihood(&self, x: &TokenSequence) -> f64 {
        self.values[x.encode()]
    }
}

/// `D x (S+1)` table of `d log p(y|x) / d x_{d,c}` at the one-hot encoding of
/// a masked sequence, over the mask-extended alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSurface {
    len: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GradientSurface {
    pub fn new(len: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != len * cols {
            return Err(Error::Shape(format!("{} gradient entries for a {len} x {cols} surface", values.len())));
        }
        Ok(Self { len, cols, values })
    }

    pub fn zeros(len: usize, cols: usize) -> Self {
        Self {
            len,
            cols,
            values: vec![0.0; len * cols],
        }
    }

    #[inline]
    pub fn get(&self, position: usize, token: usize) -> f64 {
        self.values[position * self.cols + token]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// First-order estimate of `log p(y|x~) - log p(y|x)` where `x~` is `x`
    /// with `position` changed from `from` to `to`.
    #[inline]
    pub fn log_ratio(&self, position: usize, from: usize, to: usize) -> f64 {
        self.get(position, to) - self.get(position, from)
    }

    fn add_assign(&mut self, other: &GradientSurface) {
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
    }
}

pub trait TimePredictor: Send + Sync {
    fn space(&self) -> SequenceSpace;

    /// Clamped likelihood in `[LIKELIHOOD_FLOOR, 1]`.
    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64>;

    fn has_gradient(&self) -> bool {
        false
    }

    fn gradient_surface(&self, _xt: &MaskedSequence) -> Result<GradientSurface> {
        Err(Error::Capability("predictor exposes no gradient surface".into()))
    }
}

impl<T: TimePredictor + ?Sized> TimePredictor for Arc<T> {
    fn space(&self) -> SequenceSpace {
        (**self).space()
    }

    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
        (**self).likelihood(xt)
    }

    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }

    fn gradient_surface(&self, xt: &MaskedSequence) -> Result<GradientSurface> {
        (**self).gradient_surface(xt)
    }
}

/// Clamps into `[LIKELIHOOD_FLOOR, 1]`; NaN maps to the floor.
#[inline]
pub fn clamp_likelihood(p: f64) -> f64 {
    if p.is_nan() {
        LIKELIHOOD_FLOOR
    } else {
        p.clamp(LIKELIHOOD_FLOOR, 1.0)
    }
}
