use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{softmax_in_place, Denoiser, PerPositionPosterior};
use crate::alphabet::{MaskedSequence, SequenceSpace, TokenSequence};
use crate::error::{Error, Result};

/// Sampling-time adjustments of denoiser logits: a wild-type bias `w` added to
/// the wild-type token's logit at every position, then division by the
/// temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitModifier {
    pub temperature: f64,
    pub wildtype_weight: f64,
    #[serde(default)]
    pub wildtype: Option<Vec<usize>>,
}

impl Default for LogitModifier {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            wildtype_weight: 0.0,
            wildtype: None,
        }
    }
}

impl LogitModifier {
    pub fn temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::default()
        }
    }

    pub fn wildtype(sequence: &TokenSequence, weight: f64) -> Self {
        Self {
            temperature: 1.0,
            wildtype_weight: weight,
            wildtype: Some(sequence.tokens().to_vec()),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.temperature == 1.0 && self.wildtype_weight == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if !(self.wildtype_weight >= 0.0 && self.wildtype_weight.is_finite()) {
            return Err(Error::Domain(format!(
                "wild-type weight must be a finite value >= 0, got {}",
                self.wildtype_weight
            )));
        }
        if self.wildtype_weight > 0.0 && self.wildtype.is_none() {
            return Err(Error::Domain("a positive wild-type weight needs a wild-type sequence".into()));
        }
        Ok(())
    }
}

/// Applies `modifier` to a `D x S` logit table.
pub fn apply_modifiers(logits: &[Vec<f64>], modifier: &LogitModifier) -> Result<Vec<Vec<f64>>> {
    modifier.validate()?;
    if modifier.is_identity() {
        return Ok(logits.to_vec());
    }
    let mut out = logits.to_vec();
    if modifier.wildtype_weight > 0.0 {
        let wt = modifier.wildtype.as_ref().expect("validated");
        if wt.len() != out.len() {
            return Err(Error::Shape(format!(
                "wild-type of length {} for {} logit rows",
                wt.len(),
                out.len()
            )));
        }
        for (row, &tok) in out.iter_mut().zip(wt) {
            let cell = row
                .get_mut(tok)
                .ok_or_else(|| Error::Domain(format!("wild-type token {tok} outside the alphabet")))?;
            *cell += modifier.wildtype_weight;
        }
    }
    if modifier.temperature != 1.0 {
        for row in out.iter_mut() {
            row.iter_mut().for_each(|l| *l /= modifier.temperature);
        }
    }
    Ok(out)
}

/// A denoiser whose masked-row logits (log posteriors) pass through a
/// [`LogitModifier`] before renormalization.
pub struct ModifiedDenoiser {
    inner: Arc<dyn Denoiser>,
    modifier: LogitModifier,
}

impl ModifiedDenoiser {
    pub fn new(inner: Arc<dyn Denoiser>, modifier: LogitModifier) -> Result<Self> {
        modifier.validate()?;
        if let Some(wt) = &modifier.wildtype {
            if wt.len() != inner.space().len() || wt.iter().any(|&t| t >= inner.space().size()) {
                return Err(Error::Shape("wild-type sequence does not match the denoiser".into()));
            }
        }
        Ok(Self { inner, modifier })
    }
}

impl Denoiser for ModifiedDenoiser {
    fn space(&self) -> SequenceSpace {
        self.inner.space()
    }

    fn posterior(&self, xt: &MaskedSequence) -> Result<PerPositionPosterior> {
        let base = self.inner.posterior(xt)?;
        if self.modifier.is_identity() {
            return Ok(base);
        }
        let size = base.size();
        let logits: Vec<Vec<f64>> = (0..base.len()).map(|d| base.row(d).iter().map(|p| p.ln()).collect()).collect();
        let modified = apply_modifiers(&logits, &self.modifier)?;
        let mut probs = Vec::with_capacity(base.len() * size);
        for mut row in modified {
            softmax_in_place(&mut row);
            probs.extend(row);
        }
        PerPositionPosterior::from_rows(xt, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::denoising::ExactDenoiser;
    use crate::tabular::TabularDistribution;

    #[test]
    fn identity_is_bitwise() {
        let logits = vec![vec![0.1f64, -2.3, 7.0], vec![1.0 / 3.0, 0.0, -0.0]];
        let out = apply_modifiers(&logits, &LogitModifier::default()).unwrap();
        for (a, b) in logits.iter().flatten().zip(out.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn temperature_divides() {
        let out = apply_modifiers(&[vec![2.0, 0.0]], &LogitModifier::temperature(2.0)).unwrap();
        assert_eq!(out, vec![vec![1.0, 0.0]]);
        assert!(apply_modifiers(&[vec![2.0, 0.0]], &LogitModifier::temperature(0.0)).is_err());
        assert!(apply_modifiers(&[vec![2.0, 0.0]], &LogitModifier::temperature(-1.0)).is_err());
    }

    #[test]
    fn wildtype_weight_needs_sequence() {
        let m = LogitModifier {
            temperature: 1.0,
            wildtype_weight: 1.0,
            wildtype: None,
        };
        assert!(apply_modifiers(&[vec![0.0, 0.0]], &m).is_err());
    }

    #[test]
    fn huge_wildtype_weight_selects_wildtype() {
        let a = Alphabet::new(4).unwrap();
        let space = SequenceSpace::new(3, a).unwrap();
        let p = std::sync::Arc::new(TabularDistribution::uniform(space));
        let wt = TokenSequence::new(vec![2, 0, 3], a).unwrap();
        let den = ModifiedDenoiser::new(
            std::sync::Arc::new(ExactDenoiser::new(p)),
            LogitModifier::wildtype(&wt, 1e6),
        )
        .unwrap();
        let post = den.posterior(&space.all_masked()).unwrap();
        for d in 0..3 {
            let argmax = (0..4).max_by(|&i, &j| post.prob(d, i).total_cmp(&post.prob(d, j))).unwrap();
            assert_eq!(argmax, wt.tokens()[d]);
            assert!(post.prob(d, wt.tokens()[d]) > 1.0 - 1e-12);
        }
    }
}
