use guidesampler_core::TokenSequence;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Landscape;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of samples inside the target region (true fitness).
    pub success_rate: f64,
    /// Mean pairwise Hamming distance among the samples.
    pub diversity: f64,
    /// Mean over samples of the Hamming distance to the nearest reference.
    pub novelty: f64,
}

pub fn diversity(samples: &[TokenSequence]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += samples[i].hamming(&samples[j]);
        }
    }
    total as f64 / (n * (n - 1) / 2) as f64
}

pub fn novelty(samples: &[TokenSequence], reference: &[TokenSequence]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Config("novelty needs a nonempty reference set".into()));
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let total: usize = samples
        .iter()
        .map(|x| reference.iter().map(|r| x.hamming(r)).min().expect("nonempty"))
        .sum();
    Ok(total as f64 / samples.len() as f64)
}

pub fn metrics(samples: &[TokenSequence], landscape: &Landscape, reference: &[TokenSequence]) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::Config("metrics need at least one sample".into()));
    }
    let hits = samples.iter().filter(|x| landscape.in_target(x)).count();
    Ok(Metrics {
        success_rate: hits as f64 / samples.len() as f64,
        diversity: diversity(samples),
        novelty: novelty(samples, reference)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use guidesampler_core::Alphabet;

    fn seqs(texts: &[&str]) -> Vec<TokenSequence> {
        let a = Alphabet::new(2).unwrap();
        texts.iter().map(|t| TokenSequence::parse(t, a).unwrap()).collect()
    }

    #[test]
    fn hand_counts() {
        assert_eq!(diversity(&seqs(&["AB", "AB", "AB"])), 0.0);
        assert_eq!(diversity(&seqs(&["AA", "BB"])), 2.0);
        assert_eq!(diversity(&seqs(&["AA", "AB", "BB"])), 4.0 / 3.0);
        assert_eq!(novelty(&seqs(&["AB"]), &seqs(&["BB", "AB"])).unwrap(), 0.0);
        assert_eq!(novelty(&seqs(&["AA", "BB"]), &seqs(&["AB"])).unwrap(), 1.0);
        assert!(novelty(&seqs(&["AA"]), &[]).is_err());
    }
}
