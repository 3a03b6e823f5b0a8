use serde::{Deserialize, Serialize};

use super::{softmax_in_place, Denoiser, PerPositionPosterior};
use crate::alphabet::{MaskedSequence, SequenceSpace};
use crate::error::{Error, Result};

/// Per-position softmax model conditioned on the masked context:
///
/// `logit[d][s] = single_site[d][s] + sum_{e != d} pairwise[d][e][x_e][s]`
///
/// where the context token `x_e` ranges over the mask-extended alphabet, so
/// the model sees which positions are still masked. All-zero parameters give
/// uniform posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricDenoiser {
    space: SequenceSpace,
    /// `D x S`.
    pub(crate) single_site: Vec<f64>,
    /// `D x D x (S+1) x S`; the `d == e` blocks stay zero.
    pub(crate) pairwise: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParametricJson {
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "S")]
    s: usize,
    single_site: Vec<Vec<f64>>,
    pairwise: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ParametricDenoiser {
    pub fn zeros(space: SequenceSpace) -> Self {
        let (d, s) = (space.len(), space.size());
        Self {
            space,
            single_site: vec![0.0; d * s],
            pairwise: vec![0.0; d * d * (s + 1) * s],
        }
    }

    #[inline]
    pub(crate) fn pair_offset(&self, d: usize, e: usize, ctx: usize) -> usize {
        let (len, s) = (self.space.len(), self.space.size());
        ((d * len + e) * (s + 1) + ctx) * s
    }

    /// Raw logits for position `d`, written into `out` (length `S`).
    pub(crate) fn logits_at(&self, tokens: &[usize], d: usize, out: &mut [f64]) {
        let s = self.space.size();
        out.copy_from_slice(&self.single_site[d * s..(d + 1) * s]);
        for (e, &ctx) in tokens.iter().enumerate() {
            if e == d {
                continue;
            }
            let off = self.pair_offset(d, e, ctx);
            for (o, w) in out.iter_mut().zip(&self.pairwise[off..off + s]) {
                *o += w;
            }
        }
    }

    /// `D x S` logits for every position (rows at unmasked positions are
    /// computed too, but are not used by [`Denoiser::posterior`]).
    pub fn logits(&self, xt: &MaskedSequence) -> Result<Vec<Vec<f64>>> {
        self.space.check_masked(xt)?;
        let s = self.space.size();
        Ok((0..xt.len())
            .map(|d| {
                let mut row = vec![0.0; s];
                self.logits_at(xt.tokens(), d, &mut row);
                row
            })
            .collect())
    }

    pub fn num_parameters(&self) -> usize {
        self.single_site.len() + self.pairwise.len()
    }

    /// Random parameters with standard deviation `scale`, used for loss tests.
    pub fn random(space: SequenceSpace, scale: f64, rng: &mut crate::RandomSource) -> Self {
        let mut m = Self::zeros(space);
        let (len, s) = (space.len(), space.size());
        for w in m.single_site.iter_mut() {
            *w = scale * (2.0 * rng.uniform() - 1.0) * 3f64.sqrt();
        }
        for d in 0..len {
            for e in 0..len {
                if d == e {
                    continue;
                }
                for ctx in 0..=s {
                    let off = m.pair_offset(d, e, ctx);
                    for k in 0..s {
                        m.pairwise[off + k] = scale * (2.0 * rng.uniform() - 1.0) * 3f64.sqrt();
                    }
                }
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_raw())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_raw(serde_json::from_str(text)?)
    }

    fn to_raw(&self) -> ParametricJson {
        let (len, s) = (self.space.len(), self.space.size());
        let single_site = self.single_site.chunks(s).map(|r| r.to_vec()).collect();
        let pairwise = (0..len)
            .map(|d| {
                (0..len)
                    .map(|e| {
                        (0..=s)
                            .map(|c| {
                                let off = self.pair_offset(d, e, c);
                                self.pairwise[off..off + s].to_vec()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ParametricJson {
            d: len,
            s,
            single_site,
            pairwise,
        }
    }

    fn from_raw(raw: ParametricJson) -> Result<Self> {
        let space = SequenceSpace::with_sizes(raw.d, raw.s)?;
        let mut m = Self::zeros(space);
        let (len, s) = (raw.d, raw.s);
        let bad = || Error::Shape("parametric denoiser tables do not match D and S".into());
        if raw.single_site.len() != len || raw.single_site.iter().any(|r| r.len() != s) {
            return Err(bad());
        }
        m.single_site = raw.single_site.into_iter().flatten().collect();
        if raw.pairwise.len() != len {
            return Err(bad());
        }
        for (d, block) in raw.pairwise.iter().enumerate() {
            if block.len() != len {
                return Err(bad());
            }
            for (e, ctxs) in block.iter().enumerate() {
                if ctxs.len() != s + 1 || ctxs.iter().any(|r| r.len() != s) {
                    return Err(bad());
                }
                for (c, row) in ctxs.iter().enumerate() {
                    let off = m.pair_offset(d, e, c);
                    m.pairwise[off..off + s].copy_from_slice(row);
                }
            }
        }
        if m.single_site.iter().chain(&m.pairwise).any(|w| !w.is_finite()) {
            return Err(Error::InvalidData("non-finite denoiser parameter".into()));
        }
        Ok(m)
    }
}

impl Serialize for ParametricDenoiser {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParametricDenoiser {
    fn deserialize<De: serde::Deserializer<'de>>(deserializer: De) -> std::result::Result<Self, De::Error> {
        ParametricDenoiser::from_raw(ParametricJson::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}

impl Denoiser for ParametricDenoiser {
    fn space(&self) -> SequenceSpace {
        self.space
    }

    fn posterior(&self, xt: &MaskedSequence) -> Result<PerPositionPosterior> {
        self.space.check_masked(xt)?;
        let s = self.space.size();
        let mut probs = vec![0.0; xt.len() * s];
        for d in 0..xt.len() {
            let row = &mut probs[d * s..(d + 1) * s];
            if xt.is_masked(d) {
                self.logits_at(xt.tokens(), d, row);
                softmax_in_place(row);
            } else {
                row[xt.tokens()[d]] = 1.0;
            }
        }
        Ok(PerPositionPosterior::from_rows_unchecked(xt.len(), s, probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RandomSource;

    #[test]
    fn zero_parameters_are_uniform() {
        let space = SequenceSpace::with_sizes(3, 4).unwrap();
        let post = ParametricDenoiser::zeros(space).posterior(&space.all_masked()).unwrap();
        assert!(post.as_slice().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn rows_normalize_and_json_round_trips() {
        let space = SequenceSpace::with_sizes(3, 3).unwrap();
        let mut rng = RandomSource::new(4, 0);
        let m = ParametricDenoiser::random(space, 2.0, &mut rng);
        let xt = MaskedSequence::parse("?B?", space.alphabet()).unwrap();
        let post = m.posterior(&xt).unwrap();
        for d in 0..3 {
            assert!((post.row(d).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(post.row(d).iter().all(|p| p.is_finite()));
        }
        assert_eq!(post.row(1), &[0.0, 1.0, 0.0]);
        let back = ParametricDenoiser::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let text = m.to_json().unwrap();
        assert!(text.contains("\"single_site\"") && text.contains("\"pairwise\""));
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(ParametricDenoiser::from_json(r#"{"D":2,"S":2,"single_site":[[0,0]],"pairwise":[]}"#).is_err());
    }
}
