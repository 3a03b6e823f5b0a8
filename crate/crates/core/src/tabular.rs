//! Explicit probability tables over all `S^D` sequences.

use serde::{Deserialize, Serialize};

use crate::alphabet::{MaskedSequence, SequenceSpace, TokenSequence};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Largest `(S+1)^D` for which [`MaskedMassTable`] is materialized.
pub const MASKED_TABLE_CAP: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularDistribution {
    space: SequenceSpace,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularJson {
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "S")]
    s: usize,
    weights: Vec<f64>,
}

impl TabularDistribution {
    /// Weights must be nonnegative, finite and sum to one within 1e-9.
    pub fn new(space: SequenceSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.num_states() {
            return Err(Error::Shape(format!(
                "{} weights for {} states",
                weights.len(),
                space.num_states()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Domain(format!("weight {w} at index {i} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { space, weights })
    }

    /// Normalizes arbitrary nonnegative masses.
    pub fn from_unnormalized(space: SequenceSpace, mut masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("total mass {total} cannot be normalized")));
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Self::new(space, masses)
    }

    /// Gibbs distribution `p(x) ∝ exp(-energy(x))`.
    pub fn gibbs(space: SequenceSpace, energy: impl Fn(&TokenSequence) -> f64) -> Result<Self> {
        let energies: Vec<f64> = space.iter().map(|x| energy(&x)).collect();
        let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        Self::from_unnormalized(space, energies.iter().map(|e| (min - e).exp()).collect())
    }

    pub fn uniform(space: SequenceSpace) -> Self {
        let n = space.num_states();
        Self {
            space,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Uniform over the listed sequences.
    pub fn uniform_over(space: SequenceSpace, support: &[TokenSequence]) -> Result<Self> {
        let mut masses = vec![0.0; space.num_states()];
        for x in support {
            space.check_clean(x)?;
            masses[x.encode()] = 1.0;
        }
        Self::from_unnormalized(space, masses)
    }

    pub fn point_mass(x: &TokenSequence) -> Result<Self> {
        let space = SequenceSpace::new(x.len(), x.alphabet())?;
        let mut weights = vec![0.0; space.num_states()];
        weights[x.encode()] = 1.0;
        Self::new(space, weights)
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prob(&self, x: &TokenSequence) -> f64 {
        self.weights[x.encode()]
    }

    /// `(sequence, probability)` for every positive-mass sequence.
    pub fn support(&self) -> impl Iterator<Item = (TokenSequence, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(move |(i, &w)| (self.space.decode(i).expect("index in range"), w))
    }

    /// Per-position marginals as a `D x S` row-major table.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.space.size()]; self.space.len()];
        for (x, w) in self.support() {
            for (d, &t) in x.tokens().iter().enumerate() {
                out[d][t] += w;
            }
        }
        out
    }

    /// Draw a sequence index.
    pub fn sample_index(&self, rng: &mut crate::RandomSource) -> usize {
        rng.categorical(&self.weights).expect("normalized distribution")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&TabularJson {
            d: self.space.len(),
            s: self.space.size(),
            weights: self.weights.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TabularJson = serde_json::from_str(text)?;
        Self::new(SequenceSpace::with_sizes(raw.d, raw.s)?, raw.weights)
    }
}

impl Serialize for TabularDistribution {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        TabularJson {
            d: self.space.len(),
            s: self.space.size(),
            weights: self.weights.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TabularDistribution {
    fn deserialize<De: serde::Deserializer<'de>>(deserializer: De) -> std::result::Result<Self, De::Error> {
        let raw = TabularJson::deserialize(deserializer)?;
        let space = SequenceSpace::with_sizes(raw.d, raw.s).map_err(serde::de::Error::custom)?;
        TabularDistribution::new(space, raw.weights).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn unsupported(xt: &MaskedSequence) -> Error {
    Error::UnsupportedContext {
        masked: xt.masked_positions(),
        observed: xt.observed(),
    }
}

/// Clean sequences agreeing with `xt` on its unmasked positions, weighted by
/// `p(x1 | xt)`. The weights carry no dependence on the time at which `xt`
/// was produced: the masking likelihood is identical for every consistent
/// completion and cancels in the normalization.
pub fn consistent_completions(
    xt: &MaskedSequence,
    p: &TabularDistribution,
) -> Result<Vec<(TokenSequence, f64)>> {
    p.space.check_masked(xt)?;
    let masked = xt.masked_positions();
    let s = p.space.size();
    let mut tokens: Vec<usize> = xt.tokens().to_vec();
    for &i in &masked {
        tokens[i] = 0;
    }
    let mut out = Vec::new();
    let mut total = 0.0;
    loop {
        let x = TokenSequence::new(tokens.clone(), xt.alphabet())?;
        let w = p.prob(&x);
        if w > 0.0 {
            total += w;
            out.push((x, w));
        }
        // Odometer over the masked positions.
        let mut k = 0;
        loop {
            if k == masked.len() {
                if total <= 0.0 {
                    return Err(unsupported(xt));
                }
                out.iter_mut().for_each(|(_, w)| *w /= total);
                return Ok(out);
            }
            let pos = masked[k];
            tokens[pos] += 1;
            if tokens[pos] < s {
                break;
            }
            tokens[pos] = 0;
            k += 1;
        }
    }
}

/// Sums of a per-sequence quantity over all completions of every partially
/// masked sequence, indexed by [`MaskedSequence::masked_index`].
///
/// Each masked entry is filled from entries with one fewer mask, so the full
/// table costs `S * (S+1)^D` additions instead of an enumeration per query.
#[derive(Clone, Debug)]
pub struct MaskedMassTable {
    space: SequenceSpace,
    sums: Vec<f64>,
}

impl MaskedMassTable {
    /// `values` is indexed like the clean states of `space`.
    pub fn build(space: SequenceSpace, values: &[f64]) -> Result<Self> {
        if values.len() != space.num_states() {
            return Err(Error::Shape(format!(
                "{} values for {} states",
                values.len(),
                space.num_states()
            )));
        }
        let total = space.num_masked_states()?;
        if total > MASKED_TABLE_CAP {
            return Err(Error::Size(format!(
                "{total} masked states exceed the table cap {MASKED_TABLE_CAP}"
            )));
        }
        let s = space.size();
        let radix = s + 1;
        let len = space.len();
        let mut powers = vec![1usize; len];
        for d in 1..len {
            powers[d] = powers[d - 1] * radix;
        }
        let mut sums = vec![0.0; total];
        let mut digits = vec![0usize; len];
        for idx in 0..total {
            if idx > 0 {
                for dgt in digits.iter_mut() {
                    *dgt += 1;
                    if *dgt < radix {
                        break;
                    }
                    *dgt = 0;
                }
            }
            sums[idx] = match digits.iter().position(|&dg| dg == s) {
                None => values[digits.iter().rev().fold(0usize, |acc, &dg| acc * s + dg)],
                // Replacing the mask digit by a real token lowers the index,
                // so every term below is already final.
                Some(d) => {
                    let base = idx - s * powers[d];
                    (0..s).map(|tok| sums[base + tok * powers[d]]).sum()
                }
            };
        }
        Ok(Self { space, sums })
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    #[inline]
    pub fn get_index(&self, masked_index: usize) -> f64 {
        self.sums[masked_index]
    }

    pub fn get(&self, xt: &MaskedSequence) -> f64 {
        self.sums[xt.masked_index()]
    }

    /// Stride of `position` in the masked index.
    #[inline]
    pub fn stride(&self, position: usize) -> usize {
        (self.space.size() + 1).pow(position as u32)
    }
}
