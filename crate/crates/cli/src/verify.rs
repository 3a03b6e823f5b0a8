use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;
use std::time::Instant;

use guidesampler_bench::{campaign_property, make_landscape, run_campaign, CampaignConfig, LandscapeSpec};
use guidesampler_core::denoising::{aoarm_loss_exact, fm_loss_exact, Denoiser, ExactDenoiser, ParametricDenoiser};
use guidesampler_core::oracle::{
    brute_force_posterior, chi_square_gof, chi_square_gof_probs, ks_uniform, tv_distance, EmpiricalDistribution,
    CHI_SQUARE_ALPHA, KS_ALPHA,
};
use guidesampler_core::predictors::{
    exact_marginal_predictor, product_predictor, Link, NoisyClassifier, TableCleanPredictor, TimePredictor,
};
use guidesampler_core::sampling::{
    aoarm_sample, euler_sample, guide_rates, lemma1_density, sample_chains, sample_jump_times, unguided_rates,
    AoarmOptions, EulerOptions, GuidanceConfig,
};
use guidesampler_core::{
    MaskedSequence, RandomSource, Result as CoreResult, Schedule, SequenceSpace, TabularDistribution, TokenSequence,
};
use serde::Serialize;

use crate::config::{write_resolved, SampleConfig, VerifyConfig};
use crate::error::{CliError, CliResult};
use crate::sample::{self, SamplePlan};

/// One-sided standard normal quantile at 0.99.
const Z_ONE_SIDED_99: f64 = 2.326_347_874_040_841;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    PosteriorExactness,
    SamplerEquivalence,
    LossIdentity,
    Lemma1JumpTimes,
    TagBoundary,
    MultiProperty,
    GammaLimits,
    Campaign,
    Determinism,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::PosteriorExactness,
        Check::SamplerEquivalence,
        Check::LossIdentity,
        Check::Lemma1JumpTimes,
        Check::TagBoundary,
        Check::MultiProperty,
        Check::GammaLimits,
        Check::Campaign,
        Check::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::PosteriorExactness => "posterior_exactness",
            Check::SamplerEquivalence => "sampler_equivalence",
            Check::LossIdentity => "loss_identity",
            Check::Lemma1JumpTimes => "lemma1_jump_times",
            Check::TagBoundary => "tag_boundary",
            Check::MultiProperty => "multi_property",
            Check::GammaLimits => "gamma_limits",
            Check::Campaign => "campaign",
            Check::Determinism => "determinism",
        }
    }

    /// Acceptance criterion number, 1 to 9.
    pub fn criterion(self) -> u8 {
        Check::ALL.iter().position(|&c| c == self).expect("listed") as u8 + 1
    }

    pub fn from_name(name: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == name)
    }
}

fn number(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    /// Human-readable bound, empty for reported-only values.
    pub bound: String,
    /// `None` when the value is reported but not judged.
    pub pass: Option<bool>,
}

impl Measurement {
    fn at_most(label: &str, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            bound: format!("<= {}", number(bound)),
            pass: Some(value <= bound),
        }
    }

    fn at_least(label: &str, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            bound: format!(">= {}", number(bound)),
            pass: Some(value >= bound),
        }
    }

    fn above(label: &str, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            bound: format!("> {}", number(bound)),
            pass: Some(value > bound),
        }
    }

    fn reported(label: &str, value: f64) -> Self {
        Self {
            label: label.into(),
            value,
            bound: String::new(),
            pass: None,
        }
    }

    fn holds(label: &str, ok: bool) -> Self {
        Self {
            label: label.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: "== 1".into(),
            pass: Some(ok),
        }
    }

    pub fn render(&self) -> String {
        let value = number(self.value);
        match self.pass {
            None => format!("{}={value} [reported]", self.label),
            Some(ok) => format!("{}={value} ({}{})", self.label, self.bound, if ok { "" } else { " FAILED" }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub pass: bool,
    pub measurements: Vec<Measurement>,
    /// Excluded from [`CheckReport::render`] so the table is reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

impl CheckReport {
    fn new(check: Check, measurements: Vec<Measurement>) -> Self {
        let pass = measurements.iter().all(|m| m.pass != Some(false));
        Self {
            check,
            pass,
            measurements,
            elapsed_secs: 0.0,
        }
    }

    pub fn render(&self) -> String {
        let details: Vec<String> = self.measurements.iter().map(Measurement::render).collect();
        format!(
            "{:<20} {:>2}  {}  {}",
            self.check.name(),
            self.check.criterion(),
            if self.pass { "PASS" } else { "FAIL" },
            details.join("; ")
        )
    }
}

pub fn table_header() -> String {
    format!("{:<20} {:>2}  {:<4}  {}", "check", "#", "", "measurements")
}

pub fn render_table(reports: &[CheckReport]) -> String {
    let mut out = table_header() + "\n";
    for r in reports {
        out.push_str(&r.render());
        out.push('\n');
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    let _ = writeln!(out, "{passed}/{} checks passed", reports.len());
    out
}

/// Inputs shared by all checks.
#[derive(Clone, Default)]
pub struct VerifyContext {
    pub seed: u64,
    /// Extra model to include in the loss-identity check.
    pub model: Option<Arc<ParametricDenoiser>>,
}

impl VerifyContext {
    pub fn new(seed: u64) -> Self {
        Self { seed, model: None }
    }

    /// Seed for sub-run `k` of `check`.
    fn seed_for(&self, check: Check, k: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((check.criterion() as u64) << 32 | k)
    }
}

fn random_gibbs(space: SequenceSpace, rng: &mut RandomSource) -> CoreResult<TabularDistribution> {
    let (d, s) = (space.len(), space.size());
    let single: Vec<f64> = (0..d * s).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    let pair: Vec<f64> = (0..d * d * s * s).map(|_| rng.uniform() - 0.5).collect();
    TabularDistribution::gibbs(space, |x| {
        let t = x.tokens();
        let mut e = 0.0;
        for i in 0..d {
            e += single[i * s + t[i]];
            for j in i + 1..d {
                e += pair[((i * d + j) * s + t[i]) * s + t[j]];
            }
        }
        e
    })
}

fn random_clean(space: SequenceSpace, rng: &mut RandomSource) -> CoreResult<TableCleanPredictor> {
    TableCleanPredictor::new(space, (0..space.num_states()).map(|_| 0.05 + 0.9 * rng.uniform()).collect())
}

fn aoarm_empirical(den: &dyn Denoiser, cfg: &GuidanceConfig, n: usize, seed: u64) -> CoreResult<EmpiricalDistribution> {
    let (outs, _) = sample_chains(n, seed, |rng| aoarm_sample(den, cfg, &AoarmOptions::default(), rng))?;
    EmpiricalDistribution::from_indices(den.space().num_states(), outs.iter().map(|o| o.sequence.encode()))
}

fn euler_empirical(den: &dyn Denoiser, dt: f64, n: usize, seed: u64) -> CoreResult<EmpiricalDistribution> {
    let cfg = GuidanceConfig::none();
    let opts = EulerOptions::with_dt(dt);
    let (outs, _) = sample_chains(n, seed, |rng| euler_sample(den, &cfg, &Schedule::Linear, &opts, rng))?;
    EmpiricalDistribution::from_indices(den.space().num_states(), outs.iter().map(|o| o.sequence.encode()))
}

fn posterior_exactness(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let check = Check::PosteriorExactness;
    let space = SequenceSpace::with_sizes(4, 4)?;
    let mut rng = RandomSource::new(ctx.seed_for(check, 0), 0);
    let p = Arc::new(random_gibbs(space, &mut rng)?);
    let clean = random_clean(space, &mut rng)?;
    let den = ExactDenoiser::new(p.clone());
    let pred: Arc<dyn TimePredictor> = Arc::new(exact_marginal_predictor(&clean, p.clone())?);
    let posterior = brute_force_posterior(&p, &clean, 1.0)?;
    let emp = aoarm_empirical(&den, &GuidanceConfig::deg(pred, 1.0), 200_000, ctx.seed_for(check, 1))?;
    let chi = chi_square_gof(&emp, &posterior, CHI_SQUARE_ALPHA)?;
    Ok(vec![
        Measurement::at_most("tv", emp.tv_to(posterior.weights())?, 0.02),
        Measurement::at_least("chi2_p", chi.p_value, CHI_SQUARE_ALPHA),
    ])
}

fn sampler_equivalence(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let check = Check::SamplerEquivalence;
    let space = SequenceSpace::with_sizes(4, 3)?;
    let p = Arc::new(random_gibbs(space, &mut RandomSource::new(ctx.seed_for(check, 0), 0))?);
    let den = ExactDenoiser::new(p.clone());
    let n = 200_000;
    let any_order = aoarm_empirical(&den, &GuidanceConfig::none(), n, ctx.seed_for(check, 1))?.probabilities();
    let mut fine = Vec::new();
    let mut coarse_tv = 0.0;
    let mut fine_tv = 0.0;
    let seeds = 10;
    for k in 0..seeds {
        let seed = ctx.seed_for(check, 10 + k);
        let f = euler_empirical(&den, 0.001, n, seed)?.probabilities();
        fine_tv += tv_distance(&f, p.weights())?;
        coarse_tv += euler_empirical(&den, 0.1, n, seed)?.tv_to(p.weights())?;
        if k == 0 {
            fine = f;
        }
    }
    coarse_tv /= seeds as f64;
    fine_tv /= seeds as f64;
    Ok(vec![
        Measurement::at_most("tv_aoarm_exact", tv_distance(&any_order, p.weights())?, 0.03),
        Measurement::at_most("tv_euler_exact", tv_distance(&fine, p.weights())?, 0.03),
        Measurement::at_most("tv_aoarm_euler", tv_distance(&any_order, &fine)?, 0.03),
        Measurement::reported("mean_tv_dt0.1", coarse_tv),
        Measurement::reported("mean_tv_dt0.001", fine_tv),
        Measurement::above("bias_gap", coarse_tv - fine_tv, 0.0),
    ])
}

fn loss_identity(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let mut rng = RandomSource::new(ctx.seed_for(Check::LossIdentity, 0), 0);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let space = SequenceSpace::with_sizes(1 + i % 6, 2 + (i / 6) % 2)?;
        let den = ParametricDenoiser::random(space, 1.0, &mut rng);
        let p = random_gibbs(space, &mut rng)?;
        let gap = aoarm_loss_exact(&den, &p)? - space.len() as f64 * fm_loss_exact(&den, &p)?;
        worst = worst.max(gap.abs());
    }
    let mut out = vec![Measurement::at_most("max_abs_gap_20_pairs", worst, 1e-9)];
    if let Some(model) = &ctx.model {
        let p = random_gibbs(model.space(), &mut rng)?;
        let gap = aoarm_loss_exact(model.as_ref(), &p)? - model.space().len() as f64 * fm_loss_exact(model.as_ref(), &p)?;
        out.push(Measurement::at_most("abs_gap_given_model", gap.abs(), 1e-9));
    }
    Ok(out)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    // The density is evaluated strictly after the left end.
    let at = |k: usize| f(if k == 0 { a + 1e-15 } else { a + k as f64 * h });
    let mut s = at(0) + at(n);
    for k in 1..n {
        s += at(k) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn lemma1_jump_times(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let mut rng = RandomSource::new(ctx.seed_for(Check::Lemma1JumpTimes, 0), 0);
    let n = 100_000;
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut perms = EmpiricalDistribution::new(orders.len());
    let mut transformed = Vec::with_capacity(n);
    let mut first_sum = 0.0;
    for _ in 0..n {
        let jt = sample_jump_times(3, &Schedule::Linear, &mut rng)?;
        let first = jt.times[0];
        first_sum += first;
        // Beta(1, 3) CDF maps the first jump time to a uniform.
        transformed.push(1.0 - (1.0 - first).powi(3));
        let rank = orders.iter().position(|o| o[..] == jt.order[..]).expect("a permutation of 0..3");
        perms.record(rank)?;
    }
    let ks = ks_uniform(&transformed, KS_ALPHA)?;
    let chi = chi_square_gof_probs(&perms, &[1.0 / 6.0; 6], CHI_SQUARE_ALPHA)?;
    let mut worst: f64 = 0.0;
    for i in 1..=3 {
        let prev = if i == 1 { 0.0 } else { 0.9 * rng.uniform() };
        let density = |t: f64| lemma1_density(i, t, prev, 3, &Schedule::Linear).unwrap_or(f64::NAN);
        worst = worst.max((simpson(density, prev, 1.0 - 1e-12, 20_000) - 1.0).abs());
    }
    Ok(vec![
        Measurement::above("ks_beta13_p", ks.p_value, KS_ALPHA),
        Measurement::reported("mean_first_jump", first_sum / n as f64),
        Measurement::at_most("density_integral_err", worst, 1e-6),
        Measurement::at_least("perm_chi2_p", chi.p_value, CHI_SQUARE_ALPHA),
    ])
}

fn single_site_classifier(space: SequenceSpace, link: Link, rng: &mut RandomSource) -> CoreResult<NoisyClassifier> {
    let cols = space.size() + 1;
    // Scores stay in [-5, -1], where the log-linear link is exactly log-affine.
    let single: Vec<f64> = (0..space.len() * cols).map(|_| rng.uniform() - 0.5).collect();
    NoisyClassifier::from_parts(space, link, -3.0, single, Vec::new())
}

/// Largest relative gap between TAG-guided and exact-guided rates over
/// random masked states.
fn tag_rate_gap(den: &dyn Denoiser, pred: Arc<dyn TimePredictor>, rng: &mut RandomSource) -> CoreResult<f64> {
    let space = den.space();
    let tag = GuidanceConfig::tag(pred.clone(), 1.0);
    let exact = GuidanceConfig::exact(pred, 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let tokens: Vec<usize> = (0..space.len())
            .map(|_| {
                if rng.uniform() < 0.5 {
                    space.alphabet().mask_index()
                } else {
                    (rng.uniform() * space.size() as f64) as usize % space.size()
                }
            })
            .collect();
        let xt = MaskedSequence::new(tokens, space.alphabet())?;
        if xt.is_clean() {
            continue;
        }
        let rates = unguided_rates(den, &xt, 0.5, &Schedule::Linear)?;
        let a = guide_rates(&rates, &tag)?;
        let b = guide_rates(&rates, &exact)?;
        for (x, y) in a.entries().iter().zip(b.entries()) {
            worst = worst.max((x.rate - y.rate).abs() / y.rate.abs().max(1e-300));
        }
    }
    Ok(worst)
}

fn tag_boundary(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let check = Check::TagBoundary;
    let mut rng = RandomSource::new(ctx.seed_for(check, 0), 0);
    let space = SequenceSpace::with_sizes(4, 4)?;
    let p = Arc::new(random_gibbs(space, &mut rng)?);
    let den = ExactDenoiser::new(p.clone());

    let log_linear = Arc::new(single_site_classifier(space, Link::LogLinear, &mut rng)?);
    let affine_gap = tag_rate_gap(&den, log_linear, &mut rng)?;
    let logistic = Arc::new(single_site_classifier(space, Link::Logistic, &mut rng)?);
    let logistic_gap = tag_rate_gap(&den, logistic, &mut rng)?;

    // Pairwise logistic model; mask columns stay zero so masked positions
    // drop out of the score.
    let cols = space.size() + 1;
    let d = space.len();
    let mut single = vec![0.0; d * cols];
    for pos in 0..d {
        for a in 0..space.size() {
            single[pos * cols + a] = 2.0 * rng.uniform() - 1.0;
        }
    }
    let mut pairwise = vec![0.0; d * (d - 1) / 2 * cols * cols];
    for block in pairwise.chunks_mut(cols * cols) {
        for a in 0..space.size() {
            for b in 0..space.size() {
                block[a * cols + b] = rng.uniform() - 0.5;
            }
        }
    }
    let classifier = Arc::new(NoisyClassifier::from_parts(space, Link::Logistic, 0.0, single, pairwise)?);
    let model = classifier.clone();
    let clean = move |x: &TokenSequence| model.probability(x.tokens());
    let posterior = brute_force_posterior(&p, &clean, 1.0)?;
    let exact_pred: Arc<dyn TimePredictor> = Arc::new(exact_marginal_predictor(&clean, p.clone())?);
    let n = 200_000;
    let tag_tv = aoarm_empirical(&den, &GuidanceConfig::tag(classifier.clone(), 1.0), n, ctx.seed_for(check, 1))?
        .tv_to(posterior.weights())?;
    let same_tv = aoarm_empirical(&den, &GuidanceConfig::exact(classifier, 1.0), n, ctx.seed_for(check, 3))?
        .tv_to(posterior.weights())?;
    let exact_tv = aoarm_empirical(&den, &GuidanceConfig::deg(exact_pred, 1.0), n, ctx.seed_for(check, 2))?
        .tv_to(posterior.weights())?;
    Ok(vec![
        Measurement::at_most("single_site_affine_rel_gap", affine_gap, 1e-9),
        Measurement::reported("single_site_logistic_rel_gap", logistic_gap),
        Measurement::reported("pairwise_tag_tv", tag_tv),
        Measurement::reported("pairwise_exact_tv", same_tv),
        Measurement::reported("pairwise_exact_marginal_tv", exact_tv),
        Measurement::reported("tv_ratio_to_exact_marginal", tag_tv / exact_tv),
        Measurement::at_most("tv_ratio", tag_tv / same_tv, 3.0),
    ])
}

/// DEG with the product of two exact marginal predictors; TV of the draws
/// to the brute-force joint posterior.
fn product_tv(
    p: Arc<TabularDistribution>,
    a: &TableCleanPredictor,
    b: &TableCleanPredictor,
    seed: u64,
) -> CoreResult<(f64, f64)> {
    let parts: Vec<Arc<dyn TimePredictor>> = vec![
        Arc::new(exact_marginal_predictor(a, p.clone())?),
        Arc::new(exact_marginal_predictor(b, p.clone())?),
    ];
    let joint = Arc::new(product_predictor(parts)?);
    let both = |x: &TokenSequence| a.values()[x.encode()] * b.values()[x.encode()];
    let posterior = brute_force_posterior(&p, &both, 1.0)?;
    let den = ExactDenoiser::new(p);
    let emp = aoarm_empirical(&den, &GuidanceConfig::deg(joint, 1.0), 200_000, seed)?;
    let chi = chi_square_gof(&emp, &posterior, CHI_SQUARE_ALPHA)?;
    Ok((emp.tv_to(posterior.weights())?, chi.p_value))
}

fn multi_property(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let check = Check::MultiProperty;
    let mut rng = RandomSource::new(ctx.seed_for(check, 0), 0);
    let space = SequenceSpace::with_sizes(4, 3)?;

    // Planted instance: the properties read disjoint halves of the sequence
    // and the halves are independent under the data, so the properties are
    // conditionally independent given any partial observation.
    let half = SequenceSpace::with_sizes(2, 3)?;
    let left = random_gibbs(half, &mut rng)?;
    let right = random_gibbs(half, &mut rng)?;
    let split = |x: &TokenSequence| -> (usize, usize) {
        let t = x.tokens();
        (t[0] + 3 * t[1], t[2] + 3 * t[3])
    };
    let weights: Vec<f64> = space
        .iter()
        .map(|x| {
            let (l, r) = split(&x);
            left.weights()[l] * right.weights()[r]
        })
        .collect();
    let p = Arc::new(TabularDistribution::from_unnormalized(space, weights)?);
    let la: Vec<f64> = (0..9).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
    let rb: Vec<f64> = (0..9).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
    let a = TableCleanPredictor::from_fn(space, |x| la[split(x).0])?;
    let b = TableCleanPredictor::from_fn(space, |x| rb[split(x).1])?;
    let (tv, chi_p) = product_tv(p, &a, &b, ctx.seed_for(check, 1))?;

    // General instance: coupled data and predictors over all positions,
    // where the product is only an approximation.
    let g = Arc::new(random_gibbs(space, &mut rng)?);
    let ga = random_clean(space, &mut rng)?;
    let gb = random_clean(space, &mut rng)?;
    let (general_tv, _) = product_tv(g, &ga, &gb, ctx.seed_for(check, 2))?;
    Ok(vec![
        Measurement::at_most("tv", tv, 0.02),
        Measurement::at_least("chi2_p", chi_p, CHI_SQUARE_ALPHA),
        Measurement::reported("coupled_instance_tv", general_tv),
    ])
}

fn gamma_limits(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let check = Check::GammaLimits;
    let mut rng = RandomSource::new(ctx.seed_for(check, 0), 0);
    let space = SequenceSpace::with_sizes(4, 3)?;
    let p = Arc::new(random_gibbs(space, &mut rng)?);
    let clean = random_clean(space, &mut rng)?;
    let pred: Arc<dyn TimePredictor> = Arc::new(exact_marginal_predictor(&clean, p.clone())?);
    let den = ExactDenoiser::new(p.clone());

    let flat = aoarm_empirical(&den, &GuidanceConfig::deg(pred.clone(), 0.0), 200_000, ctx.seed_for(check, 1))?;
    let chi = chi_square_gof(&flat, &p, CHI_SQUARE_ALPHA)?;

    let moments = |gamma: f64, seed: u64| -> CoreResult<(f64, f64)> {
        let cfg = GuidanceConfig::deg(pred.clone(), gamma);
        let (outs, _) = sample_chains(5000, seed, |rng| aoarm_sample(&den, &cfg, &AoarmOptions::default(), rng))?;
        let v: Vec<f64> = outs.iter().map(|o| clean.values()[o.sequence.encode()]).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok((mean, var / n))
    };
    let (m1, se1) = moments(1.0, ctx.seed_for(check, 2))?;
    let (m10, se10) = moments(10.0, ctx.seed_for(check, 3))?;
    let z = (m10 - m1) / (se1 + se10).sqrt();
    Ok(vec![
        Measurement::at_least("gamma0_chi2_p", chi.p_value, CHI_SQUARE_ALPHA),
        Measurement::reported("mean_gamma1", m1),
        Measurement::reported("mean_gamma10", m10),
        Measurement::above("welch_z", z, Z_ONE_SIDED_99),
    ])
}

fn campaign(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let cfg = CampaignConfig {
        seeds: (0..10).map(|k| ctx.seed.wrapping_mul(10).wrapping_add(k)).collect(),
        ..CampaignConfig::default()
    };
    let outcome = run_campaign(&cfg).map_err(|e| guidesampler_core::Error::Domain(e.to_string()))?;
    let summary = &outcome.summary;
    let property = campaign_property(summary);
    let row = |prefix: &str| summary.arms.iter().find(|r| r.arm.starts_with(prefix));
    let mut out = vec![Measurement::at_most("target_mass", summary.target_mass, 1e-3)];
    if let (Some(unguided), Some(filter)) = (row("unguided"), row("filter_")) {
        out.push(Measurement::reported("filter_success", filter.success_rate.mean));
        for g in summary.arms.iter().filter(|r| r.arm.starts_with("guided_g")) {
            out.push(Measurement::at_least(
                &format!("{}_success_minus_filter", g.arm),
                g.success_rate.mean - filter.success_rate.mean,
                0.0,
            ));
            out.push(Measurement::at_least(
                &format!("{}_diversity_over_unguided", g.arm),
                g.diversity.mean / unguided.diversity.mean,
                0.5,
            ));
        }
    }
    if let Some(exact) = row("guided_exact_") {
        out.push(Measurement::reported(&format!("{}_success", exact.arm), exact.success_rate.mean));
    }
    let guided_novelty = row("guided_g").map(|r| r.novelty.mean);
    for refit in summary.arms.iter().filter(|r| r.arm.starts_with("refit_")) {
        out.push(Measurement::reported(&format!("{}_success", refit.arm), refit.success_rate.mean));
        if let Some(gn) = guided_novelty {
            out.push(Measurement::reported(&format!("{}_novelty_minus_guided", refit.arm), refit.novelty.mean - gn));
        }
    }
    out.push(Measurement::holds("property", property.pass));
    Ok(out)
}

fn determinism(ctx: &VerifyContext) -> CoreResult<Vec<Measurement>> {
    let spec = LandscapeSpec {
        len: 5,
        size: 3,
        target_mass: 0.02,
        seed: ctx.seed,
        ..LandscapeSpec::default()
    };
    let land = make_landscape(&spec).map_err(|e| guidesampler_core::Error::Domain(e.to_string()))?;
    let table = land.target_table().to_vec();
    let clean = move |x: &TokenSequence| if table[x.encode()] { 1.0 } else { 0.0 };
    let pred: Arc<dyn TimePredictor> = Arc::new(exact_marginal_predictor(&clean, land.p_data().clone())?);
    let plan = SamplePlan {
        denoiser: Arc::new(ExactDenoiser::new(land.p_data().clone())),
        guidance: GuidanceConfig::deg(pred, 2.0),
    };
    let cfg = SampleConfig {
        n: 10,
        seed: ctx.seed,
        ..SampleConfig::default()
    };
    let to_core = |e: CliError| guidesampler_core::Error::Domain(e.to_string());
    let first = sample::run(&cfg, &plan).map_err(to_core)?;
    let second = sample::run(&cfg, &plan).map_err(to_core)?;
    let same_sample =
        first.samples == second.samples && first.paths == second.paths && first.diagnostics == second.diagnostics;

    let render = |check: Check| run_check(check, ctx).map(|r| r.render()).map_err(to_core);
    let same_verify = [Check::LossIdentity, Check::Lemma1JumpTimes]
        .into_iter()
        .map(|c| Ok(render(c)? == render(c)?))
        .collect::<CoreResult<Vec<bool>>>()?
        .into_iter()
        .all(|b| b);
    Ok(vec![
        Measurement::holds("sample_outputs_identical", same_sample),
        Measurement::holds("verify_rows_identical", same_verify),
    ])
}

/// Runs one check. Errors inside a check are runtime failures.
pub fn run_check(check: Check, ctx: &VerifyContext) -> CliResult<CheckReport> {
    let started = Instant::now();
    let measurements = match check {
        Check::PosteriorExactness => posterior_exactness(ctx),
        Check::SamplerEquivalence => sampler_equivalence(ctx),
        Check::LossIdentity => loss_identity(ctx),
        Check::Lemma1JumpTimes => lemma1_jump_times(ctx),
        Check::TagBoundary => tag_boundary(ctx),
        Check::MultiProperty => multi_property(ctx),
        Check::GammaLimits => gamma_limits(ctx),
        Check::Campaign => campaign(ctx),
        Check::Determinism => determinism(ctx),
    }
    .map_err(|e| CliError::Runtime(format!("{}: {e}", check.name())))?;
    let mut report = CheckReport::new(check, measurements);
    report.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Resolves the check list and the optional model; failures are config
/// errors.
pub fn prepare(cfg: &VerifyConfig) -> CliResult<(Vec<Check>, VerifyContext)> {
    let checks = if cfg.only.is_empty() {
        Check::ALL.to_vec()
    } else {
        cfg.only
            .iter()
            .map(|name| Check::from_name(name).ok_or_else(|| CliError::Config(format!("unknown check `{name}`"))))
            .collect::<CliResult<Vec<_>>>()?
    };
    let mut ctx = VerifyContext::new(cfg.seed);
    if let Some(path) = &cfg.model {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let model = ParametricDenoiser::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        ctx.model = Some(Arc::new(model));
    }
    Ok((checks, ctx))
}

/// Runs the selected checks, calling `each` after every one so callers can
/// stream the table.
pub fn cmd_verify(cfg: &VerifyConfig, mut each: impl FnMut(&CheckReport)) -> CliResult<Vec<CheckReport>> {
    let (checks, ctx) = prepare(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        write_resolved(dir, cfg)?;
    }
    let mut reports = Vec::with_capacity(checks.len());
    for check in checks {
        let report = run_check(check, &ctx)?;
        each(&report);
        reports.push(report);
    }
    if let Some(dir) = &cfg.output_dir {
        fs::write(dir.join("verify.txt"), render_table(&reports)).map_err(CliError::runtime)?;
    }
    Ok(reports)
}
