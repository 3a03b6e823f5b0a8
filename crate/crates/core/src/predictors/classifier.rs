use serde::{Deserialize, Serialize};

use super::{clamp_likelihood, GradientSurface, TimePredictor};
use crate::alphabet::{MaskedSequence, SequenceSpace, TokenSequence};
use crate::error::{Error, Result};
use crate::masking::mask_forward;
use crate::schedule::Schedule;
use crate::RandomSource;

/// Map from the linear score `z` to a probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `sigmoid(z)`.
    #[default]
    Logistic,
    /// `exp(min(z, 0))`: log-likelihood affine in the encoding wherever `z < 0`.
    LogLinear,
}

impl Link {
    fn log_prob(self, z: f64) -> f64 {
        match self {
            // log sigmoid(z) = -softplus(-z), computed stably.
            Link::Logistic => -((-z).max(0.0) + (-z.abs()).exp().ln_1p()),
            Link::LogLinear => z.min(0.0),
        }
    }

    /// `d log p / d z`.
    fn log_prob_slope(self, z: f64) -> f64 {
        match self {
            Link::Logistic => 1.0 - sigmoid(z),
            Link::LogLinear => {
                if z < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Linear score over the mask-extended one-hot encoding with single-site and
/// pairwise terms: `z = b + sum_d h[d][x_d] + sum_{d<e} J[d,e][x_d][x_e]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyClassifier {
    #[serde(rename = "D")]
    len: usize,
    #[serde(rename = "S")]
    size: usize,
    link: Link,
    bias: f64,
    /// `D x (S+1)`, row-major.
    single_site: Vec<f64>,
    /// One `(S+1) x (S+1)` block per pair `d < e`, pairs in lexicographic order.
    pairwise: Vec<f64>,
}

impl NoisyClassifier {
    pub fn zeros(space: SequenceSpace, link: Link) -> Self {
        let k = space.size() + 1;
        let d = space.len();
        Self {
            len: d,
            size: space.size(),
            link,
            bias: 0.0,
            single_site: vec![0.0; d * k],
            pairwise: vec![0.0; d * d.saturating_sub(1) / 2 * k * k],
        }
    }

    /// Builds a model from explicit parameters; `pairwise` may be empty for a
    /// single-site-only model.
    pub fn from_parts(
        space: SequenceSpace,
        link: Link,
        bias: f64,
        single_site: Vec<f64>,
        pairwise: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(space, link);
        if single_site.len() != model.single_site.len() {
            return Err(Error::Shape(format!(
                "expected {} single-site weights, got {}",
                model.single_site.len(),
                single_site.len()
            )));
        }
        if !pairwise.is_empty() && pairwise.len() != model.pairwise.len() {
            return Err(Error::Shape(format!(
                "expected {} pairwise weights, got {}",
                model.pairwise.len(),
                pairwise.len()
            )));
        }
        model.bias = bias;
        model.single_site = single_site;
        if !pairwise.is_empty() {
            model.pairwise = pairwise;
        }
        Ok(model)
    }

    pub fn space(&self) -> SequenceSpace {
        SequenceSpace::with_sizes(self.len, self.size).expect("validated on construction")
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn single_site(&self, position: usize, token: usize) -> f64 {
        self.single_site[position * (self.size + 1) + token]
    }

    pub fn is_single_site_only(&self) -> bool {
        self.pairwise.iter().all(|&w| w == 0.0)
    }

    fn cols(&self) -> usize {
        self.size + 1
    }

    fn pair_block(&self, d: usize, e: usize) -> usize {
        debug_assert!(d < e && e < self.len);
        // Pairs (0,1),(0,2),..,(0,D-1),(1,2),..
        let before = d * (2 * self.len - d - 1) / 2;
        (before + (e - d - 1)) * self.cols() * self.cols()
    }

    #[inline]
    fn pair(&self, d: usize, e: usize, a: usize, b: usize) -> f64 {
        self.pairwise[self.pair_block(d, e) + a * self.cols() + b]
    }

    /// Linear score on a mask-extended token vector.
    pub fn score(&self, tokens: &[usize]) -> f64 {
        let k = self.cols();
        let mut z = self.bias;
        for (d, &a) in tokens.iter().enumerate() {
            z += self.single_site[d * k + a];
            for (e, &b) in tokens.iter().enumerate().skip(d + 1) {
                z += self.pair(d, e, a, b);
            }
        }
        z
    }

    /// Unclamped probability.
    pub fn probability(&self, tokens: &[usize]) -> f64 {
        self.link.log_prob(self.score(tokens)).exp()
    }

    pub fn log_likelihood(&self, xt: &MaskedSequence) -> f64 {
        self.link.log_prob(self.score(xt.tokens()))
    }

    /// Log-likelihood at a relaxed encoding `u` (`D x (S+1)`, row-major).
    pub fn log_likelihood_relaxed(&self, u: &[f64]) -> Result<f64> {
        let k = self.cols();
        if u.len() != self.len * k {
            return Err(Error::Shape(format!("relaxed input has {} entries, expected {}", u.len(), self.len * k)));
        }
        let mut z = self.bias;
        for d in 0..self.len {
            let ud = &u[d * k..(d + 1) * k];
            z += ud.iter().zip(&self.single_site[d * k..(d + 1) * k]).map(|(a, b)| a * b).sum::<f64>();
            for e in d + 1..self.len {
                let ue = &u[e * k..(e + 1) * k];
                let block = &self.pairwise[self.pair_block(d, e)..][..k * k];
                for (a, &wa) in ud.iter().enumerate() {
                    if wa != 0.0 {
                        z += wa * ue.iter().zip(&block[a * k..(a + 1) * k]).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
        }
        Ok(self.link.log_prob(z))
    }

    fn surface(&self, tokens: &[usize]) -> GradientSurface {
        let k = self.cols();
        let slope = self.link.log_prob_slope(self.score(tokens));
        let mut values = vec![0.0; self.len * k];
        for d in 0..self.len {
            for c in 0..k {
                let mut dz = self.single_site[d * k + c];
                for (e, &b) in tokens.iter().enumerate() {
                    if e < d {
                        dz += self.pair(e, d, b, c);
                    } else if e > d {
                        dz += self.pair(d, e, c, b);
                    }
                }
                values[d * k + c] = slope * dz;
            }
        }
        GradientSurface::new(self.len, k, values).expect("shape matches")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: NoisyClassifier = serde_json::from_str(text)?;
        let space = SequenceSpace::with_sizes(raw.len, raw.size)?;
        Self::from_parts(space, raw.link, raw.bias, raw.single_site, raw.pairwise)
    }
}

impl TimePredictor for NoisyClassifier {
    fn space(&self) -> SequenceSpace {
        NoisyClassifier::space(self)
    }

    fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
        self.space().check_masked(xt)?;
        Ok(clamp_likelihood(self.probability(xt.tokens())))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient_surface(&self, xt: &MaskedSequence) -> Result<GradientSurface> {
        self.space().check_masked(xt)?;
        Ok(self.surface(xt.tokens()))
    }
}

/// Training settings for [`train_noisy_classifier`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Decoupled (AdamW) weight decay applied to pairwise terms only.
    pub pairwise_weight_decay: f64,
    pub pairwise: bool,
    /// Fit on clean data first, then train only mask-involving terms on
    /// re-noised data with the clean-token terms frozen.
    pub two_stage: bool,
    pub schedule: Schedule,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 0.05,
            pairwise_weight_decay: 10.0,
            pairwise: true,
            two_stage: false,
            schedule: Schedule::Linear,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Applies one step; `decay[i]` is the decoupled weight decay for `i`,
    /// entries with `trainable[i] == false` are left untouched.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, decay: &[f64], trainable: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            if !trainable[i] {
                continue;
            }
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * (mhat / (vhat.sqrt() + Self::EPS) + decay[i] * params[i]);
        }
    }
}

/// Trains a noisy classifier by full-batch AdamW on binary cross-entropy,
/// re-masking every example at a fresh time each epoch.
pub fn train_noisy_classifier(
    labels: &[(TokenSequence, bool)],
    config: &ClassifierConfig,
    rng: &mut RandomSource,
) -> Result<NoisyClassifier> {
    let first = labels.first().ok_or_else(|| Error::InvalidData("no labeled examples".into()))?;
    let alphabet = first.0.alphabet();
    let space = SequenceSpace::new(first.0.len(), alphabet)?;
    for (x, _) in labels {
        space.check_clean(x)?;
    }
    let positives = labels.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::InvalidData("labeled data must contain both classes".into()));
    }
    config.schedule.validate()?;
    if !(config.learning_rate > 0.0) || config.pairwise_weight_decay < 0.0 {
        return Err(Error::Domain("learning rate must be positive and weight decay nonnegative".into()));
    }

    let mut model = NoisyClassifier::zeros(space, Link::Logistic);
    let d_len = space.len();
    let k = space.size() + 1;
    let mask = alphabet.mask_index();
    let n_single = model.single_site.len();
    let n_pair = model.pairwise.len();
    // Parameter layout: [bias, single_site.., pairwise..].
    let n_params = 1 + n_single + n_pair;
    let mut params = vec![0.0; n_params];

    let pair_trainable = |i: usize| config.pairwise && i > n_single;
    let mut decay = vec![0.0; n_params];
    let mut trainable: Vec<bool> = (0..n_params).map(|i| i < 1 + n_single || pair_trainable(i)).collect();
    for w in decay.iter_mut().skip(1 + n_single) {
        *w = config.pairwise_weight_decay;
    }

    let stages: Vec<bool> = if config.two_stage { vec![false, true] } else { vec![true] };
    let mut tokens = vec![0usize; d_len];
    let mut grad = vec![0.0; n_params];
    let inv_n = 1.0 / labels.len() as f64;
    for (stage, &noised) in stages.iter().enumerate() {
        if config.two_stage && stage == 1 {
            // Freeze every term that only touches clean tokens.
            for d in 0..d_len {
                for c in 0..k {
                    trainable[1 + d * k + c] = c == mask;
                }
            }
            for d in 0..d_len {
                for e in d + 1..d_len {
                    let base = 1 + n_single + model.pair_block(d, e);
                    for a in 0..k {
                        for b in 0..k {
                            trainable[base + a * k + b] = config.pairwise && (a == mask || b == mask);
                        }
                    }
                }
            }
            trainable[0] = false;
            decay.iter_mut().for_each(|w| *w = 0.0);
        }
        let mut adam = Adam::new(n_params);
        for _ in 0..config.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, y) in labels {
                if noised {
                    let t = rng.uniform();
                    tokens.copy_from_slice(mask_forward(x, t, &config.schedule, rng)?.tokens());
                } else {
                    tokens.copy_from_slice(x.tokens());
                }
                let r = (sigmoid(model.score(&tokens)) - f64::from(u8::from(*y))) * inv_n;
                grad[0] += r;
                for d in 0..d_len {
                    grad[1 + d * k + tokens[d]] += r;
                    if config.pairwise {
                        for e in d + 1..d_len {
                            grad[1 + n_single + model.pair_block(d, e) + tokens[d] * k + tokens[e]] += r;
                        }
                    }
                }
            }
            adam.step(&mut params, &grad, config.learning_rate, &decay, &trainable);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { step: adam.t as usize });
            }
            model.bias = params[0];
            model.single_site.copy_from_slice(&params[1..1 + n_single]);
            model.pairwise.copy_from_slice(&params[1 + n_single..]);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;

    fn random_model(space: SequenceSpace, link: Link, pairwise: bool, rng: &mut RandomSource) -> NoisyClassifier {
        let mut m = NoisyClassifier::zeros(space, link);
        m.bias = rng.uniform() - 0.5;
        m.single_site.iter_mut().for_each(|w| *w = 2.0 * rng.uniform() - 1.0);
        if pairwise {
            m.pairwise.iter_mut().for_each(|w| *w = 2.0 * rng.uniform() - 1.0);
        }
        m
    }

    fn random_masked(space: SequenceSpace, rng: &mut RandomSource) -> MaskedSequence {
        let tokens = (0..space.len()).map(|_| (rng.uniform() * (space.size() + 1) as f64) as usize).collect();
        MaskedSequence::new(tokens, space.alphabet()).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let space = SequenceSpace::with_sizes(5, 3).unwrap();
        let mut rng = RandomSource::new(17, 0);
        let model = random_model(space, Link::Logistic, true, &mut rng);
        let k = 4;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let xt = random_masked(space, &mut rng);
            let surface = model.gradient_surface(&xt).unwrap();
            let mut u = vec![0.0; 5 * k];
            for (d, &a) in xt.tokens().iter().enumerate() {
                u[d * k + a] = 1.0;
            }
            for i in 0..u.len() {
                let mut up = u.clone();
                up[i] += h;
                let mut dn = u.clone();
                dn[i] -= h;
                let fd = (model.log_likelihood_relaxed(&up).unwrap() - model.log_likelihood_relaxed(&dn).unwrap()) / (2.0 * h);
                worst = worst.max((fd - surface.values()[i]).abs());
            }
        }
        assert!(worst <= 1e-5, "max error {worst}");
    }

    #[test]
    fn first_order_expansion_exact_for_single_site_log_linear() {
        let space = SequenceSpace::with_sizes(4, 3).unwrap();
        let mut rng = RandomSource::new(3, 0);
        let mut model = random_model(space, Link::LogLinear, false, &mut rng);
        // Keep the score negative everywhere so the link stays on its affine branch.
        model.bias = -10.0;
        for _ in 0..200 {
            let xt = random_masked(space, &mut rng);
            let g = model.gradient_surface(&xt).unwrap();
            for d in 0..4 {
                for s in 0..3 {
                    let direct = model.log_likelihood(&xt.with_token(d, s)) - model.log_likelihood(&xt);
                    let taylor = g.log_ratio(d, xt.tokens()[d], s);
                    assert!((direct - taylor).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn separable_single_position() {
        let a = Alphabet::new(3).unwrap();
        let mut labels = Vec::new();
        for _ in 0..10 {
            labels.push((TokenSequence::new(vec![0], a).unwrap(), true));
            labels.push((TokenSequence::new(vec![1], a).unwrap(), false));
            labels.push((TokenSequence::new(vec![2], a).unwrap(), false));
        }
        let model = train_noisy_classifier(&labels, &ClassifierConfig::default(), &mut RandomSource::new(1, 0)).unwrap();
        for (x, y) in &labels {
            let p = model.likelihood(&x.to_masked()).unwrap();
            assert_eq!(p > 0.5, *y);
        }
    }

    #[test]
    fn single_class_rejected() {
        let a = Alphabet::new(2).unwrap();
        let labels = vec![(TokenSequence::new(vec![0, 1], a).unwrap(), true); 4];
        let err = train_noisy_classifier(&labels, &ClassifierConfig::default(), &mut RandomSource::new(1, 0));
        assert!(matches!(err, Err(Error::InvalidData(_))));
        assert!(train_noisy_classifier(&[], &ClassifierConfig::default(), &mut RandomSource::new(1, 0)).is_err());
    }

    #[test]
    fn two_stage_keeps_clean_terms_fixed() {
        let space = SequenceSpace::with_sizes(3, 2).unwrap();
        let labels: Vec<_> = (0..60)
            .map(|i| {
                let x = space.decode(i % 8).unwrap();
                let y = x.tokens()[0] == 1;
                (x, y)
            })
            .collect();
        let cfg = ClassifierConfig {
            two_stage: true,
            epochs: 50,
            ..ClassifierConfig::default()
        };
        // The clean stage consumes no randomness and the noised stage cannot
        // touch clean-only terms, so clean scores ignore the seed.
        let a = train_noisy_classifier(&labels, &cfg, &mut RandomSource::new(1, 0)).unwrap();
        let b = train_noisy_classifier(&labels, &cfg, &mut RandomSource::new(2, 0)).unwrap();
        for x in space.iter() {
            assert_eq!(a.score(x.tokens()), b.score(x.tokens()));
        }
        assert_ne!(a.score(space.all_masked().tokens()), b.score(space.all_masked().tokens()));
    }

    #[test]
    fn json_round_trip() {
        let space = SequenceSpace::with_sizes(3, 2).unwrap();
        let model = random_model(space, Link::Logistic, true, &mut RandomSource::new(4, 0));
        let back = NoisyClassifier::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
        assert!(NoisyClassifier::from_json(r#"{"D":2,"S":2,"link":"logistic","bias":0,"single_site":[0],"pairwise":[]}"#).is_err());
    }
}
