use std::sync::Arc;

use super::{clamp_likelihood, GradientSurface, TimePredictor};
use crate::alphabet::{MaskedSequence, SequenceSpace};
use crate::error::{Error, Result};

/// Conditionally independent properties: `p(y1, y2 | x) = p(y1 | x) p(y2 | x)`.
#[derive(Clone)]
pub struct ProductPredictor {
    parts: Vec<Arc<dyn TimePredictor>>,
}

pub fn product_predictor(parts: Vec<Arc<dyn TimePredictor>>) -> Result<ProductPredictor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Domain("product predictor needs at least one part".into()))?
        .space();
    if let Some(bad) = parts.iter().find(|p| p.space() != first) {
        let other = bad.space();
        return Err(Error::Shape(format!(
            "parts disagree on shape: D={} S={} vs D={} S={}",
            first.len(),
            first.size(),
            other.len(),
            other.size()
        )));
    }
    Ok(ProductPredictor { parts })
}

impl ProductPredictor {
    pub fn parts(&self) -> &[Arc<dyn TimePredictor>] {
        &self.parts
    }
}

impl TimePredictor for ProductPredictor {
    fn space(&self) -> SequenceSpace {
        self.parts[0].space()
    }

    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
        let mut prod = 1.0;
        for part in &self.parts {
            prod *= part.likelihood(xt)?;
        }
        Ok(clamp_likelihood(prod))
    }

    fn has_gradient(&self) -> bool {
        self.parts.iter().all(|p| p.has_gradient())
    }

    fn gradient_surface(&self, xt: &MaskedSequence) -> Result<GradientSurface> {
        if !self.has_gradient() {
            return Err(Error::Capability("a product part exposes no gradient surface".into()));
        }
        let mut total = self.parts[0].gradient_surface(xt)?;
        for part in &self.parts[1..] {
            total.add_assign(&part.gradient_surface(xt)?);
        }
        Ok(total)
    }
}
