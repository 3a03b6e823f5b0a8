use crate::alphabet::{MaskedSequence, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::schedule::Schedule;

/// Forward masking: each position independently keeps its clean token with
/// probability `kappa(t)` and is replaced by the mask sentinel otherwise.
pub fn mask_forward(
    x1: &TokenSequence,
    t: f64,
    schedule: &Schedule,
    rng: &mut RandomSource,
) -> Result<MaskedSequence> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, 1]")));
    }
    let keep = schedule.kappa(t);
    let mask = x1.alphabet().mask_index();
    let tokens = x1
        .tokens()
        .iter()
        .map(|&tok| if rng.uniform() < keep { tok } else { mask })
        .collect();
    MaskedSequence::new(tokens, x1.alphabet())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

    #[test]
    fn endpoints() {
        let a = Alphabet::new(3).unwrap();
        let x = TokenSequence::new(vec![0, 1, 2, 1], a).unwrap();
        let mut rng = RandomSource::new(0, 0);
        for s in [Schedule::Linear, Schedule::power(2.0).unwrap()] {
            assert!(mask_forward(&x, 0.0, &s, &mut rng).unwrap().tokens().iter().all(|&t| t == 3));
            assert_eq!(mask_forward(&x, 1.0, &s, &mut rng).unwrap(), x.to_masked());
        }
        assert!(mask_forward(&x, 1.5, &Schedule::Linear, &mut rng).is_err());
        assert!(mask_forward(&x, -0.1, &Schedule::Linear, &mut rng).is_err());
    }

    #[test]
    fn unmasked_fraction_concentrates() {
        let x = TokenSequence::new(vec![1; 10_000], Alphabet::new(2).unwrap()).unwrap();
        let mut rng = RandomSource::new(5, 0);
        let xt = mask_forward(&x, 0.3, &Schedule::Linear, &mut rng).unwrap();
        let frac = xt.unmasked_positions().len() as f64 / 10_000.0;
        assert!((frac - 0.3).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn masked_counts_are_binomial() {
        let d = 8;
        let n = 100_000;
        let t = 0.4;
        let a = Alphabet::new(2).unwrap();
        let x = TokenSequence::new(vec![0; d], a).unwrap();
        let mut rng = RandomSource::new(17, 2);
        let mut counts = vec![0usize; d + 1];
        for _ in 0..n {
            counts[mask_forward(&x, t, &Schedule::Linear, &mut rng).unwrap().num_masked()] += 1;
        }
        let binom = Binomial::new(1.0 - t, d as u64).unwrap();
        let stat: f64 = (0..=d)
            .map(|k| {
                let e = binom.pmf(k as u64) * n as f64;
                (counts[k] as f64 - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new(d as f64).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square p = {p}");
    }
}
