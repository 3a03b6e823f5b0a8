use std::sync::Arc;

use super::{Denoiser, PerPositionPosterior};
use crate::alphabet::{MaskedSequence, SequenceSpace};
use crate::error::Result;
use crate::tabular::{consistent_completions, unsupported, MaskedMassTable, TabularDistribution};

/// Brute-force clean posterior: marginalizes the consistent completions of
/// `xt` position by position.
pub fn exact_denoise(p: &TabularDistribution, xt: &MaskedSequence) -> Result<PerPositionPosterior> {
    let completions = consistent_completions(xt, p)?;
    let size = p.space().size();
    let mut probs = vec![0.0; p.space().len() * size];
    for (x, w) in &completions {
        for (d, &tok) in x.tokens().iter().enumerate() {
            probs[d * size + tok] += w;
        }
    }
    PerPositionPosterior::from_rows(xt, probs)
}

/// The Bayes-optimal denoiser of a tabular distribution.
///
/// Queries read from a precomputed [`MaskedMassTable`] when `(S+1)^D` is
/// small enough and fall back to [`exact_denoise`] otherwise.
#[derive(Clone, Debug)]
pub struct ExactDenoiser {
    p: Arc<TabularDistribution>,
    table: Option<MaskedMassTable>,
}

impl ExactDenoiser {
    pub fn new(p: Arc<TabularDistribution>) -> Self {
        let table = MaskedMassTable::build(p.space(), p.weights()).ok();
        Self { p, table }
    }

    pub fn distribution(&self) -> &TabularDistribution {
        &self.p
    }
}

impl Denoiser for ExactDenoiser {
    fn space(&self) -> SequenceSpace {
        self.p.space()
    }

    fn posterior(&self, xt: &MaskedSequence) -> Result<PerPositionPosterior> {
        let Some(table) = &self.table else {
            return exact_denoise(&self.p, xt);
        };
        self.p.space().check_masked(xt)?;
        let idx = xt.masked_index();
        let total = table.get_index(idx);
        if !(total > 0.0) {
            return Err(unsupported(xt));
        }
        let size = xt.alphabet().size();
        let mut probs = vec![0.0; xt.len() * size];
        for d in 0..xt.len() {
            if xt.is_masked(d) {
                let stride = table.stride(d);
                let base = idx - size * stride;
                for s in 0..size {
                    probs[d * size + s] = table.get_index(base + s * stride) / total;
                }
            }
        }
        PerPositionPosterior::from_rows(xt, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{Alphabet, TokenSequence};
    use crate::error::Error;
    use crate::RandomSource;

    fn dist(support: &[&str]) -> TabularDistribution {
        let a = Alphabet::new(2).unwrap();
        let space = SequenceSpace::new(2, a).unwrap();
        let seqs: Vec<TokenSequence> = support.iter().map(|s| TokenSequence::parse(s, a).unwrap()).collect();
        TabularDistribution::uniform_over(space, &seqs).unwrap()
    }

    #[test]
    fn two_point_support() {
        let p = dist(&["AA", "BB"]);
        let xt = MaskedSequence::parse("A?", p.space().alphabet()).unwrap();
        let post = exact_denoise(&p, &xt).unwrap();
        assert_eq!(post.row(1), &[1.0, 0.0]);
        assert_eq!(post.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn three_point_support() {
        let p = dist(&["AA", "AB", "BB"]);
        let xt = MaskedSequence::parse("A?", p.space().alphabet()).unwrap();
        let post = exact_denoise(&p, &xt).unwrap();
        assert!((post.prob(1, 0) - 0.5).abs() < 1e-15);
        assert!((post.prob(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fully_masked_gives_marginals() {
        let space = SequenceSpace::with_sizes(3, 3).unwrap();
        let mut rng = RandomSource::new(9, 0);
        let p = TabularDistribution::from_unnormalized(space, (0..27).map(|_| rng.uniform()).collect()).unwrap();
        let post = exact_denoise(&p, &space.all_masked()).unwrap();
        let marg = p.marginals();
        for d in 0..3 {
            for s in 0..3 {
                assert!((post.prob(d, s) - marg[d][s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn table_path_matches_enumeration() {
        let space = SequenceSpace::with_sizes(4, 3).unwrap();
        let mut rng = RandomSource::new(21, 0);
        let masses: Vec<f64> = (0..81).map(|i| if i % 7 == 0 { 0.0 } else { rng.uniform() }).collect();
        let p = Arc::new(TabularDistribution::from_unnormalized(space, masses).unwrap());
        let fast = ExactDenoiser::new(p.clone());
        for idx in 0..space.num_masked_states().unwrap() {
            let mut rest = idx;
            let tokens = (0..4)
                .map(|_| {
                    let t = rest % 4;
                    rest /= 4;
                    t
                })
                .collect();
            let xt = MaskedSequence::new(tokens, space.alphabet()).unwrap();
            match (exact_denoise(&p, &xt), fast.posterior(&xt)) {
                (Ok(a), Ok(b)) => {
                    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                        assert!((u - v).abs() < 1e-12);
                    }
                    for d in xt.masked_positions() {
                        assert!((b.row(d).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                }
                (Err(Error::UnsupportedContext { .. }), Err(Error::UnsupportedContext { .. })) => {}
                (a, b) => panic!("paths disagree at {xt}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn unsupported_context_names_positions() {
        let p = dist(&["AA", "BB"]);
        let xt = MaskedSequence::parse("AB", p.space().alphabet()).unwrap();
        let err = ExactDenoiser::new(Arc::new(p)).posterior(&xt).unwrap_err();
        assert!(matches!(err, Error::UnsupportedContext { ref observed, .. } if observed == &vec![(0, 0), (1, 1)]));
    }
}
