use std::sync::Arc;

use super::{clamp_likelihood, CleanPredictor, TimePredictor};
use crate::alphabet::{MaskedSequence, SequenceSpace};
use crate::error::{Error, Result};
use crate::tabular::{consistent_completions, unsupported, MaskedMassTable, TabularDistribution};

/// `p(y | x_t) = E_{x1 ~ p(x1 | x_t)} [p(y | x1)]`, computed exactly.
pub struct ExactMarginalPredictor {
    p: Arc<TabularDistribution>,
    clean_values: Vec<f64>,
    tables: Option<(MaskedMassTable, MaskedMassTable)>,
}

pub fn exact_marginal_predictor(
    clean: &dyn CleanPredictor,
    p: Arc<TabularDistribution>,
) -> Result<ExactMarginalPredictor> {
    let space = p.space();
    let clean_values: Vec<f64> = space.iter().map(|x| clean.likelihood(&x)).collect();
    if let Some(v) = clean_values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("clean likelihood {v} outside [0, 1]")));
    }
    let joint: Vec<f64> = p.weights().iter().zip(&clean_values).map(|(w, c)| w * c).collect();
    let tables = match (
        MaskedMassTable::build(space, &joint),
        MaskedMassTable::build(space, p.weights()),
    ) {
        (Ok(num), Ok(den)) => Some((num, den)),
        _ => None,
    };
    Ok(ExactMarginalPredictor {
        p,
        clean_values,
        tables,
    })
}

impl ExactMarginalPredictor {
    /// Unclamped expectation.
    pub fn expectation(&self, xt: &MaskedSequence) -> Result<f64> {
        self.p.space().check_masked(xt)?;
        if let Some((num, den)) = &self.tables {
            let idx = xt.masked_index();
            let z = den.get_index(idx);
            if !(z > 0.0) {
                return Err(unsupported(xt));
            }
            if xt.is_clean() {
                return Ok(self.clean_values[xt.to_clean()?.encode()]);
            }
            return Ok(num.get_index(idx) / z);
        }
        Ok(consistent_completions(xt, &self.p)?
            .iter()
            .map(|(x, w)| w * self.clean_values[x.encode()])
            .sum())
    }
}

impl TimePredictor for ExactMarginalPredictor {
    fn space(&self) -> SequenceSpace {
        self.p.space()
    }

    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
        self.expectation(xt).map(clamp_likelihood)
    }
}
