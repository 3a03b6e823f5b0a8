use serde::{Deserialize, Serialize};

use super::parametric::ParametricDenoiser;
use crate::alphabet::{SequenceSpace, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

pub const LEARNING_RATE: f64 = 0.1;
pub const BATCH_SIZE: usize = 32;
const RUNNING_LOSS_DECAY: f64 = 0.99;

/// Which stochastic objective generates the training contexts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// `t ~ U[0,1]`, one uniformly chosen position forced masked and the
    /// others masked with probability `1 - t`; cross-entropy at the forced
    /// position. Unbiased for the hazard-weighted masked flow-matching loss.
    Fm,
    /// `t ~ U[0,1]`, every position masked with probability `1 - t`;
    /// cross-entropy summed over the masked positions.
    Mlm,
    /// Uniform decoding order and step; cross-entropy of the next position
    /// given the already decoded ones.
    Aoarm,
}

/// Training sequences with nonnegative sampling weights.
#[derive(Clone, Debug)]
pub struct WeightedSamples {
    space: SequenceSpace,
    items: Vec<(TokenSequence, f64)>,
}

impl WeightedSamples {
    pub fn new(space: SequenceSpace, items: Vec<(TokenSequence, f64)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidData("training data is empty".into()));
        }
        for (x, w) in &items {
            space.check_clean(x)?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidData(format!("sample weight {w} is not a nonnegative number")));
            }
        }
        if !(items.iter().map(|(_, w)| w).sum::<f64>() > 0.0) {
            return Err(Error::InvalidData("training data has zero total weight".into()));
        }
        Ok(Self { space, items })
    }

    pub fn unweighted(space: SequenceSpace, seqs: Vec<TokenSequence>) -> Result<Self> {
        Self::new(space, seqs.into_iter().map(|x| (x, 1.0)).collect())
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    pub fn items(&self) -> &[(TokenSequence, f64)] {
        &self.items
    }

    fn weights(&self) -> Vec<f64> {
        self.items.iter().map(|(_, w)| *w).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub model: ParametricDenoiser,
    /// Exponential moving average of the mini-batch loss.
    pub final_loss: f64,
}

/// Plain mini-batch SGD on the parametric denoiser with fixed step size. The
/// returned parameters are the average of the iterates over the second half
/// of training, which removes the constant-step-size noise floor. Zero steps
/// returns the all-zero (uniform) model.
pub fn train_denoiser(
    variant: LossVariant,
    data: &WeightedSamples,
    steps: usize,
    rng: &mut RandomSource,
) -> Result<TrainingReport> {
    let space = data.space();
    let mut model = ParametricDenoiser::zeros(space);
    let (len, s) = (space.len(), space.size());
    let mask = space.alphabet().mask_index();
    let weights = data.weights();

    let mut grad_single = vec![0.0; model.single_site.len()];
    let mut grad_pair = vec![0.0; model.pairwise.len()];
    let mut logits = vec![0.0; s];
    let mut running = f64::NAN;
    let average_from = steps / 2;
    let mut avg = ParametricDenoiser::zeros(space);
    let mut n_avg = 0usize;

    for step in 0..steps {
        grad_single.iter_mut().for_each(|g| *g = 0.0);
        grad_pair.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..BATCH_SIZE {
            let idx = rng.categorical(&weights).expect("positive total weight");
            let x1 = data.items[idx].0.tokens();
            let (tokens, targets) = draw_context(variant, x1, len, mask, rng);
            for &d in &targets {
                model.logits_at(&tokens, d, &mut logits);
                super::softmax_in_place(&mut logits);
                batch_loss -= logits[x1[d]].ln();
                // d(CE)/d(logit) = softmax - onehot.
                logits[x1[d]] -= 1.0;
                for (g, p) in grad_single[d * s..(d + 1) * s].iter_mut().zip(&logits) {
                    *g += p;
                }
                for (e, &ctx) in tokens.iter().enumerate() {
                    if e == d {
                        continue;
                    }
                    let off = model.pair_offset(d, e, ctx);
                    for (g, p) in grad_pair[off..off + s].iter_mut().zip(&logits) {
                        *g += p;
                    }
                }
            }
        }
        let scale = LEARNING_RATE / BATCH_SIZE as f64;
        for (w, g) in model.single_site.iter_mut().zip(&grad_single) {
            *w -= scale * g;
        }
        for (w, g) in model.pairwise.iter_mut().zip(&grad_pair) {
            *w -= scale * g;
        }
        batch_loss /= BATCH_SIZE as f64;
        if !batch_loss.is_finite() || model.single_site.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { step });
        }
        if step >= average_from {
            n_avg += 1;
            let k = 1.0 / n_avg as f64;
            for (a, w) in avg.single_site.iter_mut().zip(&model.single_site) {
                *a += k * (w - *a);
            }
            for (a, w) in avg.pairwise.iter_mut().zip(&model.pairwise) {
                *a += k * (w - *a);
            }
        }
        running = if running.is_nan() {
            batch_loss
        } else {
            RUNNING_LOSS_DECAY * running + (1.0 - RUNNING_LOSS_DECAY) * batch_loss
        };
    }
    Ok(TrainingReport {
        model: if n_avg > 0 { avg } else { model },
        final_loss: if running.is_nan() { 0.0 } else { running },
    })
}

/// Masked context tokens plus the positions whose cross-entropy is scored.
fn draw_context(
    variant: LossVariant,
    x1: &[usize],
    len: usize,
    mask: usize,
    rng: &mut RandomSource,
) -> (Vec<usize>, Vec<usize>) {
    match variant {
        LossVariant::Fm => {
            let t = rng.uniform();
            let forced = ((rng.uniform() * len as f64) as usize).min(len - 1);
            let tokens = (0..len)
                .map(|i| if i == forced || rng.uniform() >= t { mask } else { x1[i] })
                .collect();
            (tokens, vec![forced])
        }
        LossVariant::Mlm => {
            let t = rng.uniform();
            let tokens: Vec<usize> = x1.iter().map(|&tok| if rng.uniform() >= t { mask } else { tok }).collect();
            let targets = (0..len).filter(|&i| tokens[i] == mask).collect();
            (tokens, targets)
        }
        LossVariant::Aoarm => {
            let order = rng.permutation(len);
            let step = ((rng.uniform() * len as f64) as usize).min(len - 1);
            let mut tokens = vec![mask; len];
            for &pos in &order[..step] {
                tokens[pos] = x1[pos];
            }
            (tokens, vec![order[step]])
        }
    }
}
