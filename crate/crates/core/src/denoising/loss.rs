//! Exact evaluators for the masked training objectives, by enumeration.
//!
//! Losses are nonnegative minimization targets (negated log-likelihoods).
//!
//! With a uniform time prior and `kappa(t) = t`, a particular mask pattern
//! with `m` of `D` positions masked has probability `t^(D-m) (1-t)^m` at time
//! `t`. Integrating over `t` gives the Beta integrals used below:
//!
//! * generative masked-language objective (unweighted cross-entropy summed
//!   over masked positions): pattern weight `Int t^(D-m)(1-t)^m dt = m!(D-m)!/(D+1)!`;
//! * masked flow-matching objective: the masked cross-entropy carries the
//!   unmasking hazard `kappa_dot/(1-kappa) = 1/(1-t)`, giving
//!   `Int t^(D-m)(1-t)^(m-1) dt = (m-1)!(D-m)!/D!`, and we report it per
//!   position (divided by `D`). The pattern-size marginal of that weight is
//!   `C(D,m) (m-1)!(D-m)!/D! = 1/m`, which is exactly how an any-order
//!   autoregressive model sees contexts: a uniformly chosen step and a
//!   uniformly chosen next position among the `m` still-masked ones. Hence
//!   `aoarm_loss_exact = D * fm_loss_exact` for every denoiser.

use super::Denoiser;
use crate::alphabet::{MaskedSequence, TokenSequence};
use crate::error::{Error, Result};
use crate::tabular::TabularDistribution;

pub const FM_LOSS_MAX_LEN: usize = 12;
pub const AOARM_LOSS_MAX_LEN: usize = 8;
const MAX_SUPPORT_WORK: usize = 1 << 26;

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn check_shapes(denoiser: &dyn Denoiser, p: &TabularDistribution) -> Result<()> {
    if denoiser.space() != p.space() {
        return Err(Error::Shape("denoiser and distribution live on different spaces".into()));
    }
    Ok(())
}

/// Sums `weight(m) * sum_{j masked} -ln p_theta(x1_j | x_t)` over the support
/// of `p` and every mask pattern.
fn pattern_loss(
    denoiser: &dyn Denoiser,
    p: &TabularDistribution,
    weight: impl Fn(usize) -> f64,
) -> Result<f64> {
    check_shapes(denoiser, p)?;
    let len = p.space().len();
    if len > FM_LOSS_MAX_LEN {
        return Err(Error::Size(format!("D = {len} exceeds the enumeration cap {FM_LOSS_MAX_LEN}")));
    }
    let support: Vec<(TokenSequence, f64)> = p.support().collect();
    if support.len().saturating_mul(1 << len) > MAX_SUPPORT_WORK {
        return Err(Error::Size(format!(
            "{} support sequences x {} mask patterns is too many to enumerate",
            support.len(),
            1usize << len
        )));
    }
    let mask = p.space().alphabet().mask_index();
    let mut total = 0.0;
    for (x1, px) in &support {
        for pattern in 1u32..(1u32 << len) {
            let m = pattern.count_ones() as usize;
            let tokens: Vec<usize> = (0..len)
                .map(|i| if pattern >> i & 1 == 1 { mask } else { x1.tokens()[i] })
                .collect();
            let xt = MaskedSequence::new(tokens, x1.alphabet())?;
            let post = denoiser.posterior(&xt)?;
            let ce: f64 = (0..len)
                .filter(|i| pattern >> i & 1 == 1)
                .map(|i| -post.prob(i, x1.tokens()[i]).ln())
                .sum();
            total += px * weight(m) * ce;
        }
    }
    Ok(total)
}

/// Masked flow-matching loss under the uniform schedule, per position.
pub fn fm_loss_exact(denoiser: &dyn Denoiser, p: &TabularDistribution) -> Result<f64> {
    let len = p.space().len();
    let d_fact = factorial(len);
    pattern_loss(denoiser, p, |m| factorial(m - 1) * factorial(len - m) / (len as f64 * d_fact))
}

/// Generative masked-language loss with `t ~ U[0,1]`: the expected sum of
/// masked-position cross-entropies without time weighting.
pub fn mlm_loss_exact(denoiser: &dyn Denoiser, p: &TabularDistribution) -> Result<f64> {
    let len = p.space().len();
    let norm = factorial(len + 1);
    pattern_loss(denoiser, p, |m| factorial(m) * factorial(len - m) / norm)
}

/// Any-order autoregressive negative log-likelihood averaged over all `D!`
/// decoding orders.
pub fn aoarm_loss_exact(denoiser: &dyn Denoiser, p: &TabularDistribution) -> Result<f64> {
    check_shapes(denoiser, p)?;
    let len = p.space().len();
    if len > AOARM_LOSS_MAX_LEN {
        return Err(Error::Size(format!("D = {len} exceeds the enumeration cap {AOARM_LOSS_MAX_LEN}")));
    }
    let support: Vec<(TokenSequence, f64)> = p.support().collect();
    let mut order: Vec<usize> = (0..len).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    loop {
        for (x1, px) in &support {
            let mut xt = MaskedSequence::new(vec![x1.alphabet().mask_index(); len], x1.alphabet())?;
            let mut nll = 0.0;
            for &pos in &order {
                let post = denoiser.posterior(&xt)?;
                nll -= post.prob(pos, x1.tokens()[pos]).ln();
                xt.set(pos, x1.tokens()[pos]);
            }
            total += px * nll;
        }
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok(total / count as f64)
}

/// Lexicographic successor; false once the last permutation is reached.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
