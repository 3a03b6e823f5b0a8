use std::sync::Arc;

use guidesampler_core::{RandomSource, SequenceSpace, TabularDistribution, TokenSequence};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest landscape the harness will enumerate.
pub const MAX_STATES: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSpec {
    pub len: usize,
    pub size: usize,
    /// Spread of the single-site data energies.
    pub energy_scale: f64,
    /// Spread of the pairwise data energies.
    pub coupling_scale: f64,
    /// Spread of the single-site fitness effects.
    pub fitness_scale: f64,
    /// Spread of the pairwise fitness effects.
    pub fitness_coupling_scale: f64,
    /// One threshold axis or two (rectangle target).
    pub properties: usize,
    /// Correlation between the two axes' single-site effects.
    pub axis_correlation: f64,
    /// Upper bound on the target's mass under the data distribution.
    pub target_mass: f64,
    /// For two axes: data-quantile of the first axis anchoring the rectangle.
    pub rectangle_anchor: f64,
    pub seed: u64,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            len: 8,
            size: 4,
            energy_scale: 1.0,
            coupling_scale: 0.3,
            fitness_scale: 1.0,
            fitness_coupling_scale: 0.2,
            properties: 1,
            axis_correlation: -0.5,
            target_mass: 1e-3,
            rectangle_anchor: 0.7,
            seed: 0,
        }
    }
}

/// Single-site plus pairwise function `sum_d h[d][x_d] + sum_{d<e} J[d][e][x_d][x_e]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potts {
    pub len: usize,
    pub size: usize,
    /// `D x S`.
    pub single: Vec<f64>,
    /// `D x D x S x S`; only `d < e` blocks are read.
    pub pairwise: Vec<f64>,
}

impl Potts {
    pub fn zeros(len: usize, size: usize) -> Self {
        Self {
            len,
            size,
            single: vec![0.0; len * size],
            pairwise: vec![0.0; len * len * size * size],
        }
    }

    fn random(len: usize, size: usize, single_scale: f64, pair_scale: f64, rng: &mut RandomSource) -> Self {
        let mut p = Self::zeros(len, size);
        p.single.iter_mut().for_each(|w| *w = single_scale * gaussian(rng));
        for d in 0..len {
            for e in d + 1..len {
                for a in 0..size {
                    for b in 0..size {
                        let i = p.pair_index(d, e, a, b);
                        p.pairwise[i] = pair_scale * gaussian(rng);
                    }
                }
            }
        }
        p
    }

    #[inline]
    fn pair_index(&self, d: usize, e: usize, a: usize, b: usize) -> usize {
        ((d * self.len + e) * self.size + a) * self.size + b
    }

    pub fn eval(&self, tokens: &[usize]) -> f64 {
        let mut total = 0.0;
        for (d, &a) in tokens.iter().enumerate() {
            total += self.single[d * self.size + a];
            for (e, &b) in tokens.iter().enumerate().skip(d + 1) {
                total += self.pairwise[self.pair_index(d, e, a, b)];
            }
        }
        total
    }

    fn check(&self, len: usize, size: usize) -> Result<()> {
        if self.len != len
            || self.size != size
            || self.single.len() != len * size
            || self.pairwise.len() != len * len * size * size
        {
            return Err(Error::Config(format!("parameter table does not match D={len}, S={size}")));
        }
        Ok(())
    }
}

/// Standard normal draw (Box-Muller).
fn gaussian(rng: &mut RandomSource) -> f64 {
    let u1 = 1.0 - rng.uniform();
    let u2 = rng.uniform();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandscapeRecord {
    spec: LandscapeSpec,
    energy: Potts,
    fitness: Vec<Potts>,
    thresholds: Vec<f64>,
}

/// A planted design problem: data distribution, true fitness axes and a
/// target region `{x : fitness_i(x) >= thresholds[i] for every axis i}`.
#[derive(Clone, Debug)]
pub struct Landscape {
    spec: LandscapeSpec,
    energy: Potts,
    fitness: Vec<Potts>,
    thresholds: Vec<f64>,
    p_data: Arc<TabularDistribution>,
    fitness_values: Vec<Vec<f64>>,
    in_target: Vec<bool>,
    target_mass: f64,
}

pub fn make_landscape(spec: &LandscapeSpec) -> Result<Landscape> {
    let space = check_spec(spec)?;
    let mut rng = RandomSource::new(spec.seed, 0);
    let energy = Potts::random(spec.len, spec.size, spec.energy_scale, spec.coupling_scale, &mut rng);
    let first = Potts::random(spec.len, spec.size, spec.fitness_scale, spec.fitness_coupling_scale, &mut rng);
    let mut fitness = vec![first];
    if spec.properties == 2 {
        let rho = spec.axis_correlation;
        let mut second = Potts::random(spec.len, spec.size, spec.fitness_scale, spec.fitness_coupling_scale, &mut rng);
        let root = (1.0 - rho * rho).sqrt();
        for (w, &v) in second.single.iter_mut().zip(&fitness[0].single) {
            *w = rho * v + root * *w;
        }
        fitness.push(second);
    }
    let p_data = gibbs(space, &energy)?;
    let fitness_values: Vec<Vec<f64>> = fitness.iter().map(|f| table(space, f)).collect();
    let thresholds = choose_thresholds(spec, &p_data, &fitness_values)?;
    Landscape::assemble(spec.clone(), energy, fitness, thresholds, p_data, fitness_values)
}

fn check_spec(spec: &LandscapeSpec) -> Result<SequenceSpace> {
    let space = SequenceSpace::with_sizes(spec.len, spec.size)?;
    if space.num_states() > MAX_STATES {
        return Err(Error::Config(format!(
            "landscape has {} states, above the enumeration cap {MAX_STATES}",
            space.num_states()
        )));
    }
    if !(1..=2).contains(&spec.properties) {
        return Err(Error::Config(format!("properties must be 1 or 2, got {}", spec.properties)));
    }
    if !(spec.target_mass > 0.0 && spec.target_mass < 1.0) {
        return Err(Error::Config(format!("target mass {} outside (0, 1)", spec.target_mass)));
    }
    if !(-1.0..=1.0).contains(&spec.axis_correlation) || !(0.0..1.0).contains(&spec.rectangle_anchor) {
        return Err(Error::Config("axis correlation or rectangle anchor out of range".into()));
    }
    Ok(space)
}

fn gibbs(space: SequenceSpace, energy: &Potts) -> Result<Arc<TabularDistribution>> {
    Ok(Arc::new(TabularDistribution::gibbs(space, |x| energy.eval(x.tokens()))?))
}

fn table(space: SequenceSpace, f: &Potts) -> Vec<f64> {
    space.iter().map(|x| f.eval(x.tokens())).collect()
}

/// Highest threshold set whose region keeps mass at most `target_mass`,
/// adding states in decreasing order of `score`.
fn threshold_for_mass(weights: &[f64], score: &[f64], eligible: &[bool], mass: f64) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = (0..score.len()).filter(|&i| eligible[i]).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut best = None;
    for &i in &order {
        if cum + weights[i] > mass {
            break;
        }
        cum += weights[i];
        best = Some((score[i], cum));
    }
    best
}

fn choose_thresholds(spec: &LandscapeSpec, p: &TabularDistribution, fitness: &[Vec<f64>]) -> Result<Vec<f64>> {
    let w = p.weights();
    let unreachable = || Error::Config(format!("no target region has mass at most {}", spec.target_mass));
    if fitness.len() == 1 {
        let (t, _) = threshold_for_mass(w, &fitness[0], &vec![true; w.len()], spec.target_mass).ok_or_else(unreachable)?;
        return Ok(vec![t]);
    }
    // Anchor the first axis at a data quantile, then tighten the second.
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| fitness[0][a].total_cmp(&fitness[0][b]).then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut anchor = fitness[0][order[order.len() - 1]];
    for &i in &order {
        cum += w[i];
        if cum >= spec.rectangle_anchor {
            anchor = fitness[0][i];
            break;
        }
    }
    let eligible: Vec<bool> = fitness[0].iter().map(|&f| f >= anchor).collect();
    let (t2, _) = threshold_for_mass(w, &fitness[1], &eligible, spec.target_mass).ok_or_else(unreachable)?;
    Ok(vec![anchor, t2])
}

impl Landscape {
    fn assemble(
        spec: LandscapeSpec,
        energy: Potts,
        fitness: Vec<Potts>,
        thresholds: Vec<f64>,
        p_data: Arc<TabularDistribution>,
        fitness_values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = p_data.weights().len();
        let in_target: Vec<bool> = (0..n)
            .map(|i| fitness_values.iter().zip(&thresholds).all(|(f, &t)| f[i] >= t))
            .collect();
        let target_mass = p_data.weights().iter().zip(&in_target).filter(|(_, &t)| t).map(|(w, _)| w).sum();
        Ok(Self {
            spec,
            energy,
            fitness,
            thresholds,
            p_data,
            fitness_values,
            in_target,
            target_mass,
        })
    }

    pub fn spec(&self) -> &LandscapeSpec {
        &self.spec
    }

    pub fn space(&self) -> SequenceSpace {
        self.p_data.space()
    }

    pub fn p_data(&self) -> &Arc<TabularDistribution> {
        &self.p_data
    }

    pub fn num_properties(&self) -> usize {
        self.fitness.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Exact mass of the target region under the data distribution.
    pub fn target_mass(&self) -> f64 {
        self.target_mass
    }

    pub fn fitness(&self, axis: usize, x: &TokenSequence) -> f64 {
        self.fitness_values[axis][x.encode()]
    }

    pub fn fitness_table(&self, axis: usize) -> &[f64] {
        &self.fitness_values[axis]
    }

    pub fn in_target(&self, x: &TokenSequence) -> bool {
        self.in_target[x.encode()]
    }

    pub fn target_table(&self) -> &[bool] {
        &self.in_target
    }

    pub fn to_json(&self) -> Result<String> {
        let record = LandscapeRecord {
            spec: self.spec.clone(),
            energy: self.energy.clone(),
            fitness: self.fitness.clone(),
            thresholds: self.thresholds.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: LandscapeRecord = serde_json::from_str(text)?;
        let space = check_spec(&record.spec)?;
        record.energy.check(space.len(), space.size())?;
        if record.fitness.len() != record.spec.properties || record.thresholds.len() != record.spec.properties {
            return Err(Error::Config("fitness axes and thresholds must match `properties`".into()));
        }
        for f in &record.fitness {
            f.check(space.len(), space.size())?;
        }
        let p_data = gibbs(space, &record.energy)?;
        let fitness_values = record.fitness.iter().map(|f| table(space, f)).collect();
        Self::assemble(record.spec, record.energy, record.fitness, record.thresholds, p_data, fitness_values)
    }
}
