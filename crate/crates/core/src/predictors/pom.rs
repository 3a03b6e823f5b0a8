use std::sync::Arc;

use super::{clamp_likelihood, CleanPredictor, TimePredictor};
use crate::alphabet::{MaskedSequence, SequenceSpace, TokenSequence};
use crate::denoising::Denoiser;
use crate::error::{Error, Result};
use crate::RandomSource;

/// Monte-Carlo estimate of `E[p(y | x1)]` with the free positions of `x_t`
/// drawn independently from the denoiser's per-position marginals.
#[derive(Clone)]
pub struct PomPredictor {
    clean: Arc<dyn CleanPredictor>,
    denoiser: Arc<dyn Denoiser>,
    n_samples: usize,
    seed: u64,
}

/// When used as a [`TimePredictor`], each query draws from a stream keyed by
/// `seed` and the masked index, so repeated queries give the same value.
pub fn pom_predictor(
    clean: Arc<dyn CleanPredictor>,
    denoiser: Arc<dyn Denoiser>,
    n_samples: usize,
    seed: u64,
) -> Result<PomPredictor> {
    if n_samples == 0 {
        return Err(Error::Domain("pom predictor needs at least one sample".into()));
    }
    Ok(PomPredictor {
        clean,
        denoiser,
        n_samples,
        seed,
    })
}

impl PomPredictor {
    /// Unclamped estimate with an explicit random source.
    pub fn estimate(&self, xt: &MaskedSequence, rng: &mut RandomSource) -> Result<f64> {
        let space = self.denoiser.space();
        space.check_masked(xt)?;
        let alphabet = space.alphabet();
        if xt.is_clean() {
            return Ok(self.clean.likelihood(&xt.to_clean()?));
        }
        let post = self.denoiser.posterior(xt)?;
        let masked = xt.masked_positions();
        let mut tokens = xt.tokens().to_vec();
        let mut total = 0.0;
        for _ in 0..self.n_samples {
            for &d in &masked {
                tokens[d] = rng
                    .categorical(post.row(d))
                    .ok_or_else(|| Error::InvalidData(format!("denoiser row {d} has no mass")))?;
            }
            total += self.clean.likelihood(&TokenSequence::new(tokens.clone(), alphabet)?);
        }
        Ok(total / self.n_samples as f64)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}

impl TimePredictor for PomPredictor {
    fn space(&self) -> SequenceSpace {
        self.denoiser.space()
    }

    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
        let mut rng = RandomSource::new(self.seed, xt.masked_index() as u64);
        self.estimate(xt, &mut rng).map(clamp_likelihood)
    }
}

/// Exact product-of-marginals expectation by enumerating the free positions.
pub fn pom_exact_expectation(
    clean: &dyn CleanPredictor,
    denoiser: &dyn Denoiser,
    xt: &MaskedSequence,
) -> Result<f64> {
    let space = denoiser.space();
    space.check_masked(xt)?;
    let post = denoiser.posterior(xt)?;
    let masked = xt.masked_positions();
    let s = space.size();
    let mut tokens = xt.tokens().to_vec();
    let mut digits = vec![0usize; masked.len()];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (&d, &v) in masked.iter().zip(&digits) {
            tokens[d] = v;
            w *= post.prob(d, v);
        }
        if w > 0.0 {
            total += w * clean.likelihood(&TokenSequence::new(tokens.clone(), space.alphabet())?);
        }
        let mut i = 0;
        while i < digits.len() {
            digits[i] += 1;
            if digits[i] < s {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == digits.len() {
            return Ok(total);
        }
    }
}
