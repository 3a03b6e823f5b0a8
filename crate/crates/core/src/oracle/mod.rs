//! Brute-force ground truth and statistical verdicts for verifying samplers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::predictors::CleanPredictor;
use crate::tabular::TabularDistribution;

/// Default significance level for chi-square goodness of fit.
pub const CHI_SQUARE_ALPHA: f64 = 0.001;
/// Default significance level for the uniformity KS test.
pub const KS_ALPHA: f64 = 0.01;
/// Cells with a smaller expected count are pooled.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// The tilted posterior `p(y|x)^gamma p(x)`, normalized.
pub fn brute_force_posterior(
    p: &TabularDistribution,
    clean: &dyn CleanPredictor,
    gamma: f64,
) -> Result<TabularDistribution> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(p.clone());
    }
    let space = p.space();
    let masses: Vec<f64> = space
        .iter()
        .zip(p.weights())
        .map(|(x, &w)| if w > 0.0 { w * clean.likelihood(&x).powf(gamma) } else { 0.0 })
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("posterior normalizer is zero".into()));
    }
    TabularDistribution::from_unnormalized(space, masses)
}

/// `1/2 sum |a - b|` over a shared index set.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("distributions over {} and {} cells", a.len(), b.len())));
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Counts per sequence index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalDistribution {
    pub fn new(num_states: usize) -> Self {
        Self {
            counts: vec![0; num_states],
            total: 0,
        }
    }

    pub fn from_indices(num_states: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut emp = Self::new(num_states);
        for i in indices {
            emp.record(i)?;
        }
        Ok(emp)
    }

    pub fn record(&mut self, index: usize) -> Result<()> {
        let cells = self.counts.len();
        let slot = self
            .counts
            .get_mut(index)
            .ok_or_else(|| Error::Domain(format!("index {index} outside {cells} cells")))?;
        *slot += 1;
        self.total += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &EmpiricalDistribution) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::Shape("cannot merge empirical distributions of different sizes".into()));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.total += other.total;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn tv_to(&self, expected: &[f64]) -> Result<f64> {
        tv_distance(&self.probabilities(), expected)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
}

impl TestVerdict {
    fn new(statistic: f64, dof: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            dof,
            p_value,
            alpha,
            pass: p_value > alpha,
        }
    }
}

/// Pearson goodness of fit against `expected`; cells with expected count
/// below five are pooled into one overflow cell.
pub fn chi_square_gof(emp: &EmpiricalDistribution, expected: &TabularDistribution, alpha: f64) -> Result<TestVerdict> {
    chi_square_gof_probs(emp, expected.weights(), alpha)
}

pub fn chi_square_gof_probs(emp: &EmpiricalDistribution, expected: &[f64], alpha: f64) -> Result<TestVerdict> {
    if emp.total == 0 {
        return Err(Error::Domain("chi-square test needs at least one observation".into()));
    }
    if expected.len() != emp.counts.len() {
        return Err(Error::Shape(format!("{} expected cells for {} observed", expected.len(), emp.counts.len())));
    }
    let n = emp.total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&c, &q) in emp.counts.iter().zip(expected) {
        let e = q * n;
        if e >= MIN_EXPECTED_COUNT {
            cells.push((c as f64, e));
        } else {
            pooled.0 += c as f64;
            pooled.1 += e;
        }
    }
    if pooled.0 > 0.0 || pooled.1 > 0.0 {
        if pooled.1 >= MIN_EXPECTED_COUNT || cells.is_empty() {
            cells.push(pooled);
        } else {
            // Too small on its own: fold into the smallest regular cell.
            let smallest = cells
                .iter_mut()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty");
            smallest.0 += pooled.0;
            smallest.1 += pooled.1;
        }
    }
    if cells.len() <= 1 {
        return Ok(TestVerdict::new(0.0, 0.0, 1.0, alpha));
    }
    let mut statistic = 0.0;
    for &(o, e) in &cells {
        if e > 0.0 {
            statistic += (o - e).powi(2) / e;
        } else if o > 0.0 {
            statistic = f64::INFINITY;
        }
    }
    let dof = (cells.len() - 1) as f64;
    let p_value = if statistic.is_finite() {
        ChiSquared::new(dof)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sf(statistic)
    } else {
        0.0
    };
    Ok(TestVerdict::new(statistic, dof, p_value, alpha))
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
pub fn ks_uniform(values: &[f64], alpha: f64) -> Result<TestVerdict> {
    if values.is_empty() {
        return Err(Error::Domain("KS test needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("value {v} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max);
    let root = n.sqrt();
    let p_value = kolmogorov_tail((root + 0.12 + 0.11 / root) * d);
    Ok(TestVerdict::new(d, n, p_value, alpha))
}

/// Area under the ROC curve, ties counted as one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidData("AUROC needs both classes".into()));
    }
    // Mann-Whitney U from midranks.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * midrank;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}
