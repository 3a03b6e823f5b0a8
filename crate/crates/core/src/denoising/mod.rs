//! Denoisers `p(x1^i | x_t)`: per-position clean-token posteriors given a
//! partially masked sequence.
//!
//! A denoiser never takes the time as input. Under masking noise the clean
//! posterior depends on `x_t` only, so the flow-matching and masked-language
//! objectives train the same function.

mod exact;
mod loss;
mod modifier;
mod parametric;
mod train;

use std::sync::Arc;

pub use exact::{exact_denoise, ExactDenoiser};
pub use loss::{aoarm_loss_exact, fm_loss_exact, mlm_loss_exact, FM_LOSS_MAX_LEN, AOARM_LOSS_MAX_LEN};
pub use modifier::{apply_modifiers, LogitModifier, ModifiedDenoiser};
pub use parametric::ParametricDenoiser;
pub use train::{train_denoiser, LossVariant, TrainingReport, WeightedSamples, LEARNING_RATE, BATCH_SIZE};

use crate::alphabet::{MaskedSequence, SequenceSpace};
use crate::error::{Error, Result};

/// `D x S` table of clean-token probabilities for one query `x_t`.
///
/// Masked rows are proper distributions over the real symbols; unmasked rows
/// are the one-hot of the observed token. There is no mask column, so no mass
/// can ever be placed on the mask sentinel.
#[derive(Clone, Debug, PartialEq)]
pub struct PerPositionPosterior {
    len: usize,
    size: usize,
    probs: Vec<f64>,
}

impl PerPositionPosterior {
    /// Builds from masked-row probabilities; rows of unmasked positions are
    /// overwritten by the one-hot of the observed token.
    pub fn from_rows(xt: &MaskedSequence, mut probs: Vec<f64>) -> Result<Self> {
        let len = xt.len();
        let size = xt.alphabet().size();
        if probs.len() != len * size {
            return Err(Error::Shape(format!("{} probabilities for a {len} x {size} table", probs.len())));
        }
        for (d, &tok) in xt.tokens().iter().enumerate() {
            if tok != xt.alphabet().mask_index() {
                let row = &mut probs[d * size..(d + 1) * size];
                row.iter_mut().enumerate().for_each(|(s, p)| *p = if s == tok { 1.0 } else { 0.0 });
            }
        }
        Ok(Self { len, size, probs })
    }

    pub(crate) fn from_rows_unchecked(len: usize, size: usize, probs: Vec<f64>) -> Self {
        Self { len, size, probs }
    }

    #[inline]
    pub fn row(&self, position: usize) -> &[f64] {
        &self.probs[position * self.size..(position + 1) * self.size]
    }

    #[inline]
    pub fn prob(&self, position: usize, token: usize) -> f64 {
        self.probs[position * self.size + token]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

pub trait Denoiser: Send + Sync {
    fn space(&self) -> SequenceSpace;

    fn posterior(&self, xt: &MaskedSequence) -> Result<PerPositionPosterior>;
}

impl<T: Denoiser + ?Sized> Denoiser for Arc<T> {
    fn space(&self) -> SequenceSpace {
        (**self).space()
    }

    fn posterior(&self, xt: &MaskedSequence) -> Result<PerPositionPosterior> {
        (**self).posterior(xt)
    }
}

impl<T: Denoiser + ?Sized> Denoiser for &T {
    fn space(&self) -> SequenceSpace {
        (**self).space()
    }

    fn posterior(&self, xt: &MaskedSequence) -> Result<PerPositionPosterior> {
        (**self).posterior(xt)
    }
}

/// Numerically stable in-place softmax.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::INFINITY {
        let n_inf = row.iter().filter(|v| **v == f64::INFINITY).count() as f64;
        row.iter_mut().for_each(|v| *v = if *v == f64::INFINITY { 1.0 / n_inf } else { 0.0 });
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
