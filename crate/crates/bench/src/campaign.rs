use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use guidesampler_core::denoising::{train_denoiser, Denoiser, ExactDenoiser, LossVariant, WeightedSamples};
use guidesampler_core::predictors::{
    exact_marginal_predictor, product_predictor, train_noisy_classifier, ClassifierConfig, TimePredictor,
};
use guidesampler_core::sampling::{aoarm_sample, AoarmOptions, GuidanceConfig};
use guidesampler_core::{RandomSource, TokenSequence};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{draw_labeled, labels_at_quantile, LabeledSet};
use crate::error::{Error, Result};
use crate::landscape::{make_landscape, Landscape, LandscapeSpec};
use crate::metrics::{metrics, Metrics};

/// Arms count as compute-matched when their wall-time ratio to the
/// reference guided arm lies in `[1 / MATCHED_RATIO, MATCHED_RATIO]`.
pub const MATCHED_RATIO: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArmKind {
    /// `k` draws from the pretrained model.
    Unguided,
    /// `k` guided draws using the classifier trained on the labeled set.
    Guided { gamma: f64 },
    /// `k` guided draws using the exact target predictor (upper bound).
    GuidedExact { gamma: f64 },
    /// `n_total` unguided draws, keep the `k` the classifier scores highest.
    Filter { n_total: usize },
    /// Retrain the denoiser on the best `top_q` fraction of labeled data.
    Refit { top_q: f64 },
}

/// Alias kept for configuration files that list arms.
pub type ArmSpec = ArmKind;

impl ArmKind {
    pub fn name(&self, k: usize) -> String {
        match self {
            ArmKind::Unguided => "unguided".into(),
            ArmKind::Guided { gamma } => format!("guided_g{gamma}"),
            ArmKind::GuidedExact { gamma } => format!("guided_exact_g{gamma}"),
            ArmKind::Filter { n_total } => format!("filter_top{k}_of_{n_total}"),
            ArmKind::Refit { top_q } => format!("refit_q{top_q}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub landscape: LandscapeSpec,
    pub seeds: Vec<u64>,
    pub n_labeled: usize,
    /// Samples each arm delivers.
    pub k: usize,
    /// Labeled values at or above this quantile count as positives.
    pub label_quantile: f64,
    pub arms: Vec<ArmKind>,
    pub classifier: ClassifierConfig,
    pub refit_steps: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            landscape: LandscapeSpec::default(),
            seeds: (0..10).collect(),
            n_labeled: 1000,
            k: 100,
            label_quantile: 0.9,
            arms: vec![
                ArmKind::Unguided,
                ArmKind::Guided { gamma: 1.0 },
                ArmKind::Guided { gamma: 10.0 },
                ArmKind::GuidedExact { gamma: 1.0 },
                ArmKind::Filter { n_total: 1000 },
                ArmKind::Refit { top_q: 0.02 },
                ArmKind::Refit { top_q: 0.1 },
            ],
            classifier: ClassifierConfig::default(),
            refit_steps: 3000,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.k == 0 || self.n_labeled == 0 || self.arms.is_empty() {
            return Err(Error::Config("campaign needs seeds, arms, k > 0 and labeled data".into()));
        }
        if !(0.0..1.0).contains(&self.label_quantile) {
            return Err(Error::Config(format!("label quantile {} outside [0, 1)", self.label_quantile)));
        }
        let mut names = std::collections::BTreeSet::new();
        for arm in &self.arms {
            match *arm {
                ArmKind::Filter { n_total } if n_total < self.k => {
                    return Err(Error::Config(format!("filter keeps k = {} of only {n_total} draws", self.k)))
                }
                ArmKind::Refit { top_q } if !(top_q > 0.0 && top_q <= 1.0) => {
                    return Err(Error::Config(format!("refit fraction {top_q} outside (0, 1]")))
                }
                ArmKind::Guided { gamma } | ArmKind::GuidedExact { gamma } if !(gamma >= 0.0) => {
                    return Err(Error::Config(format!("gamma {gamma} must be nonnegative")))
                }
                _ => {}
            }
            if !names.insert(arm.name(self.k)) {
                return Err(Error::Config(format!("arm {} listed twice", arm.name(self.k))));
            }
        }
        Ok(())
    }
}

/// Generated sequences plus the predictor evaluations spent on them.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSamples {
    pub samples: Vec<TokenSequence>,
    pub oracle_calls: u64,
    /// Seconds spent generating and scoring, excluding any training.
    pub generation_secs: f64,
}

/// One row per (arm, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub arm: String,
    pub seed: u64,
    pub n_samples: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub n_oracle_calls: u64,
    /// Generation time; excluded from the CSV so reruns are byte-identical.
    #[serde(skip_serializing)]
    pub wall_time_secs: f64,
}

fn draw_unguided(denoiser: &dyn Denoiser, n: usize, rng: &mut RandomSource) -> Result<Vec<TokenSequence>> {
    let cfg = GuidanceConfig::none();
    (0..n)
        .map(|i| Ok(aoarm_sample(denoiser, &cfg, &AoarmOptions::default(), &mut rng.substream(i as u64))?.sequence))
        .collect()
}

fn draw_guided(
    denoiser: &dyn Denoiser,
    cfg: &GuidanceConfig,
    n: usize,
    rng: &mut RandomSource,
) -> Result<ArmSamples> {
    let clock = Instant::now();
    let mut out = ArmSamples {
        samples: Vec::with_capacity(n),
        oracle_calls: 0,
        generation_secs: 0.0,
    };
    for i in 0..n {
        let s = aoarm_sample(denoiser, cfg, &AoarmOptions::default(), &mut rng.substream(i as u64))?;
        out.oracle_calls += s.diagnostics.predictor_calls + s.diagnostics.gradient_calls;
        out.samples.push(s.sequence);
    }
    out.generation_secs = clock.elapsed().as_secs_f64();
    Ok(out)
}

/// Draws `n_total` unguided samples and keeps the `k` with the highest
/// predictor score (ties keep the earlier draw).
pub fn run_posthoc_filter(
    denoiser: &dyn Denoiser,
    predictor: &dyn TimePredictor,
    n_total: usize,
    k: usize,
    rng: &mut RandomSource,
) -> Result<ArmSamples> {
    if k > n_total {
        return Err(Error::Config(format!("cannot keep {k} of {n_total} draws")));
    }
    let clock = Instant::now();
    let pool = draw_unguided(denoiser, n_total, rng)?;
    let scores = pool
        .iter()
        .map(|x| predictor.likelihood(&x.to_masked()))
        .collect::<guidesampler_core::Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..n_total).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(ArmSamples {
        samples: order[..k].iter().map(|&i| pool[i].clone()).collect(),
        oracle_calls: n_total as u64,
        generation_secs: clock.elapsed().as_secs_f64(),
    })
}

/// Combined ranking score: the single axis, or the smaller standardized
/// value across axes.
fn ranking_scores(data: &LabeledSet) -> Vec<f64> {
    let standardized: Vec<Vec<f64>> = data
        .values
        .iter()
        .map(|v| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
            v.iter().map(|x| (x - mean) / sd).collect()
        })
        .collect();
    (0..data.len())
        .map(|i| standardized.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Retrains the parametric denoiser on the best `top_q` fraction of the
/// labeled data, then draws `k` samples from it.
pub fn run_refit_baseline(
    data: &LabeledSet,
    top_q: f64,
    k: usize,
    steps: usize,
    rng: &mut RandomSource,
) -> Result<ArmSamples> {
    if !(top_q > 0.0 && top_q <= 1.0) {
        return Err(Error::Config(format!("refit fraction {top_q} outside (0, 1]")));
    }
    let keep = (top_q * data.len() as f64).floor() as usize;
    if keep == 0 {
        return Err(Error::Config(format!(
            "top {top_q} of {} labeled sequences selects nothing",
            data.len()
        )));
    }
    let scores = ranking_scores(data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let curated: Vec<TokenSequence> = order[..keep].iter().map(|&i| data.sequences[i].clone()).collect();
    let first = &curated[0];
    let space = guidesampler_core::SequenceSpace::new(first.len(), first.alphabet())?;
    let samples = WeightedSamples::unweighted(space, curated)?;
    let model = train_denoiser(LossVariant::Fm, &samples, steps, &mut rng.substream(u64::MAX))?.model;
    let clock = Instant::now();
    let samples = draw_unguided(&model, k, rng)?;
    Ok(ArmSamples {
        samples,
        oracle_calls: 0,
        generation_secs: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

fn interval(values: &[f64]) -> Interval {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Interval {
            mean,
            lower: mean,
            upper: mean,
        };
    }
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0).map_or(1.96, |d| d.inverse_cdf(0.975));
    let half = t * sd / n.sqrt();
    Interval {
        mean,
        lower: mean - half,
        upper: mean + half,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: String,
    pub seeds: usize,
    pub success_rate: Interval,
    pub diversity: Interval,
    pub novelty: Interval,
    pub mean_oracle_calls: f64,
    pub mean_wall_time_secs: f64,
    /// Wall time relative to the reference guided arm.
    pub wall_time_ratio: Option<f64>,
    pub matched: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub target_mass: f64,
    pub reference_arm: Option<String>,
    pub arms: Vec<SummaryRow>,
    pub total_wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct CampaignOutcome {
    pub results: Vec<CampaignResult>,
    pub summary: CampaignSummary,
    pub landscape: Landscape,
}

fn target_predictor(landscape: &Landscape) -> Result<Arc<dyn TimePredictor>> {
    let table = landscape.target_table().to_vec();
    let clean = move |x: &TokenSequence| if table[x.encode()] { 1.0 } else { 0.0 };
    Ok(Arc::new(exact_marginal_predictor(&clean, landscape.p_data().clone())?))
}

fn train_predictor(cfg: &CampaignConfig, data: &LabeledSet, seed: u64) -> Result<Arc<dyn TimePredictor>> {
    let mut parts: Vec<Arc<dyn TimePredictor>> = Vec::new();
    for axis in 0..data.values.len() {
        let labels = labels_at_quantile(data, axis, cfg.label_quantile)?;
        let mut rng = RandomSource::new(seed, 2 + axis as u64);
        parts.push(Arc::new(train_noisy_classifier(&labels, &cfg.classifier, &mut rng)?));
    }
    if parts.len() == 1 {
        Ok(parts.pop().expect("one part"))
    } else {
        Ok(Arc::new(product_predictor(parts)?))
    }
}

/// Runs every arm for every seed. Seeds run on the current rayon pool;
/// results are ordered by seed, then by arm as listed in the config.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let landscape = make_landscape(&cfg.landscape)?;
    let denoiser = ExactDenoiser::new(landscape.p_data().clone());
    let needs_exact = cfg.arms.iter().any(|a| matches!(a, ArmKind::GuidedExact { .. }));
    let exact = if needs_exact { Some(target_predictor(&landscape)?) } else { None };

    let per_seed: Vec<Vec<CampaignResult>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = draw_labeled(&landscape, cfg.n_labeled, &mut RandomSource::new(seed, 1))?;
            let needs_classifier = cfg.arms.iter().any(|a| matches!(a, ArmKind::Guided { .. } | ArmKind::Filter { .. }));
            let classifier = if needs_classifier { Some(train_predictor(cfg, &data, seed)?) } else { None };
            let mut rows = Vec::with_capacity(cfg.arms.len());
            for (index, arm) in cfg.arms.iter().enumerate() {
                let mut rng = RandomSource::new(seed, 100 + index as u64);
                let drawn = match *arm {
                    ArmKind::Unguided => {
                        let clock = Instant::now();
                        let samples = draw_unguided(&denoiser, cfg.k, &mut rng)?;
                        ArmSamples {
                            samples,
                            oracle_calls: 0,
                            generation_secs: clock.elapsed().as_secs_f64(),
                        }
                    }
                    ArmKind::Guided { gamma } => {
                        let p = classifier.clone().expect("trained above");
                        draw_guided(&denoiser, &GuidanceConfig::deg(p, gamma), cfg.k, &mut rng)?
                    }
                    ArmKind::GuidedExact { gamma } => {
                        let p = exact.clone().expect("built above");
                        draw_guided(&denoiser, &GuidanceConfig::deg(p, gamma), cfg.k, &mut rng)?
                    }
                    ArmKind::Filter { n_total } => {
                        let p = classifier.as_ref().expect("trained above");
                        run_posthoc_filter(&denoiser, p.as_ref(), n_total, cfg.k, &mut rng)?
                    }
                    ArmKind::Refit { top_q } => run_refit_baseline(&data, top_q, cfg.k, cfg.refit_steps, &mut rng)?,
                };
                rows.push(CampaignResult {
                    arm: arm.name(cfg.k),
                    seed,
                    n_samples: drawn.samples.len(),
                    metrics: metrics(&drawn.samples, &landscape, &data.sequences)?,
                    n_oracle_calls: drawn.oracle_calls,
                    wall_time_secs: drawn.generation_secs,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let results: Vec<CampaignResult> = per_seed.into_iter().flatten().collect();
    let summary = summarize(cfg, &landscape, &results, started.elapsed().as_secs_f64());
    Ok(CampaignOutcome {
        results,
        summary,
        landscape,
    })
}

fn summarize(cfg: &CampaignConfig, landscape: &Landscape, results: &[CampaignResult], total: f64) -> CampaignSummary {
    let mut grouped: BTreeMap<&str, Vec<&CampaignResult>> = BTreeMap::new();
    for r in results {
        grouped.entry(r.arm.as_str()).or_default().push(r);
    }
    let reference = cfg
        .arms
        .iter()
        .find(|a| matches!(a, ArmKind::Guided { .. }))
        .map(|a| a.name(cfg.k));
    let mean_wall = |rows: &[&CampaignResult]| rows.iter().map(|r| r.wall_time_secs).sum::<f64>() / rows.len() as f64;
    let reference_wall = reference.as_deref().and_then(|name| grouped.get(name)).map(|rows| mean_wall(rows));
    let arms = cfg
        .arms
        .iter()
        .map(|arm| {
            let name = arm.name(cfg.k);
            let rows = &grouped[name.as_str()];
            let pick = |f: fn(&Metrics) -> f64| rows.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>();
            let wall = mean_wall(rows);
            let ratio = reference_wall.filter(|&w| w > 0.0).map(|w| wall / w);
            SummaryRow {
                arm: name,
                seeds: rows.len(),
                success_rate: interval(&pick(|m| m.success_rate)),
                diversity: interval(&pick(|m| m.diversity)),
                novelty: interval(&pick(|m| m.novelty)),
                mean_oracle_calls: rows.iter().map(|r| r.n_oracle_calls as f64).sum::<f64>() / rows.len() as f64,
                mean_wall_time_secs: wall,
                wall_time_ratio: ratio,
                matched: ratio.map(|r| (1.0 / MATCHED_RATIO..=MATCHED_RATIO).contains(&r)),
            }
        })
        .collect();
    CampaignSummary {
        target_mass: landscape.target_mass(),
        reference_arm: reference,
        arms,
        total_wall_time_secs: total,
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    arm: &'a str,
    seed: u64,
    n_samples: usize,
    success_rate: f64,
    diversity: f64,
    novelty: f64,
    n_oracle_calls: u64,
}

impl CampaignOutcome {
    /// CSV rows without wall time, so reruns are byte-identical.
    pub fn csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in &self.results {
            writer.serialize(CsvRow {
                arm: &r.arm,
                seed: r.seed,
                n_samples: r.n_samples,
                success_rate: r.metrics.success_rate,
                diversity: r.metrics.diversity,
                novelty: r.metrics.novelty,
                n_oracle_calls: r.n_oracle_calls,
            })?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes `campaign.csv`, `summary.json` and `landscape.json` into `dir`,
    /// creating it when missing.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("campaign.csv"), self.csv()?)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        fs::write(dir.join("landscape.json"), self.landscape.to_json()? + "\n")?;
        Ok(())
    }
}

/// Outcome of the guidance-versus-baselines comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub pass: bool,
    pub details: Vec<String>,
}

/// Every classifier-guided arm must match or beat the filter's mean success
/// and keep at least half the unguided diversity.
pub fn campaign_property(summary: &CampaignSummary) -> PropertyCheck {
    let unguided = summary.arms.iter().find(|r| r.arm == "unguided");
    let filter = summary.arms.iter().find(|r| r.arm.starts_with("filter_"));
    let mut details = Vec::new();
    let (Some(unguided), Some(filter)) = (unguided, filter) else {
        return PropertyCheck {
            pass: false,
            details: vec!["campaign needs an unguided and a filter arm".into()],
        };
    };
    let guided: Vec<&SummaryRow> = summary.arms.iter().filter(|r| r.arm.starts_with("guided_g")).collect();
    if guided.is_empty() {
        details.push("campaign has no classifier-guided arm".into());
    }
    let mut pass = !guided.is_empty();
    for g in guided {
        let success_ok = g.success_rate.mean >= filter.success_rate.mean;
        let diversity_ok = g.diversity.mean >= 0.5 * unguided.diversity.mean;
        pass &= success_ok && diversity_ok;
        details.push(format!(
            "{}: success {:.4} vs filter {:.4} ({}), diversity {:.3} vs half unguided {:.3} ({})",
            g.arm,
            g.success_rate.mean,
            filter.success_rate.mean,
            if success_ok { "ok" } else { "FAIL" },
            g.diversity.mean,
            0.5 * unguided.diversity.mean,
            if diversity_ok { "ok" } else { "FAIL" },
        ));
    }
    PropertyCheck { pass, details }
}
