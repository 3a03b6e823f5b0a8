use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::RandomSource;

/// Sorted jump times and the position that jumps at each.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpTimes {
    pub times: Vec<f64>,
    /// `order[i]` is the position whose time ranks `i`-th.
    pub order: Vec<usize>,
}

/// Every position unmasks at `kappa^-1(U)` for an independent uniform `U`;
/// ties go to the lower position index.
pub fn sample_jump_times(len: usize, schedule: &Schedule, rng: &mut RandomSource) -> Result<JumpTimes> {
    if len == 0 {
        return Err(Error::Domain("need at least one position".into()));
    }
    schedule.validate()?;
    let raw: Vec<f64> = (0..len).map(|_| schedule.inverse(rng.uniform())).collect();
    let order = rank_positions(&raw);
    let times = order.iter().map(|&d| raw[d]).collect();
    Ok(JumpTimes { times, order })
}

fn rank_positions(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    order
}

/// Density of the `i`-th jump time (1-based) given the previous one:
/// `(D - i + 1) k'(t) / (1 - k(p)) * ((1 - k(t)) / (1 - k(p)))^(D - i)`.
pub fn lemma1_density(i: usize, tau: f64, tau_prev: f64, len: usize, schedule: &Schedule) -> Result<f64> {
    if i == 0 || i > len {
        return Err(Error::Domain(format!("step {i} outside 1..={len}")));
    }
    if !(0.0 <= tau_prev && tau_prev < tau && tau < 1.0) {
        return Err(Error::Domain(format!(
            "jump times must satisfy 0 <= previous < current < 1, got {tau_prev} and {tau}"
        )));
    }
    let survive_prev = 1.0 - schedule.kappa(tau_prev);
    let ratio = (1.0 - schedule.kappa(tau)) / survive_prev;
    Ok((len - i + 1) as f64 * schedule.kappa_dot(tau) / survive_prev * ratio.powi((len - i) as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        for tau in [0.1, 0.5, 0.9] {
            assert_eq!(lemma1_density(1, tau, 0.0, 1, &Schedule::Linear).unwrap(), 1.0);
        }
        // Minimum of two uniforms has density 2 (1 - t).
        assert!((lemma1_density(1, 0.5, 0.0, 2, &Schedule::Linear).unwrap() - 1.0).abs() < 1e-15);
        assert!(lemma1_density(1, 0.3, 0.4, 2, &Schedule::Linear).is_err());
        assert!(lemma1_density(0, 0.3, 0.1, 2, &Schedule::Linear).is_err());
        assert!(lemma1_density(3, 0.3, 0.1, 2, &Schedule::Linear).is_err());
    }

    #[test]
    fn ties_break_by_position() {
        assert_eq!(rank_positions(&[0.5, 0.2, 0.5, 0.2]), vec![1, 3, 0, 2]);
        let mut rng = RandomSource::new(0, 0);
        for _ in 0..100 {
            let jt = sample_jump_times(5, &Schedule::Linear, &mut rng).unwrap();
            for w in jt.times.windows(2) {
                assert!(w[0] <= w[1]);
            }
            let mut seen = jt.order.clone();
            seen.sort_unstable();
            assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        }
        assert!(sample_jump_times(0, &Schedule::Linear, &mut rng).is_err());
    }
}
