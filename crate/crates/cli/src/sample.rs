use std::fs;
use std::path::Path;
use std::sync::Arc;

use guidesampler_bench::Landscape;
use guidesampler_core::denoising::{Denoiser, ExactDenoiser, LogitModifier, ModifiedDenoiser, ParametricDenoiser};
use guidesampler_core::predictors::{exact_marginal_predictor, product_predictor, NoisyClassifier, TimePredictor};
use guidesampler_core::sampling::{
    aoarm_sample, euler_sample, sample_chains, AoarmOptions, BatchDiagnostics, EulerOptions, GuidanceConfig,
    GuidanceMode, MAX_EULER_DT,
};
use guidesampler_core::TokenSequence;
use serde::Serialize;

use crate::config::{write_resolved, SampleConfig, SamplerKind};
use crate::error::{CliError, CliResult};

pub const SAMPLES_FILE: &str = "samples.txt";
pub const PATHS_FILE: &str = "paths.jsonl";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// The denoiser, guidance and options a sampling run resolved to.
pub struct SamplePlan {
    pub denoiser: Arc<dyn Denoiser>,
    pub guidance: GuidanceConfig,
}

/// File contents of one sampling run. Wall time is kept out so repeated
/// runs are byte-identical.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleArtifacts {
    pub samples: String,
    pub paths: Option<String>,
    pub diagnostics: String,
    pub wall_time_secs: f64,
}

#[derive(Serialize)]
struct DiagnosticsRecord {
    chains: u64,
    overflow_steps: u64,
    predictor_calls: u64,
    gradient_calls: u64,
    denoiser_calls: u64,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_classifier(path: &Path) -> CliResult<Arc<dyn TimePredictor>> {
    let model = NoisyClassifier::from_json(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(model))
}

fn load_model(path: &Path) -> CliResult<Arc<dyn Denoiser>> {
    let model =
        ParametricDenoiser::from_json(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(model))
}

fn combine(mut parts: Vec<Arc<dyn TimePredictor>>) -> CliResult<Option<Arc<dyn TimePredictor>>> {
    match parts.len() {
        0 => Ok(None),
        1 => Ok(parts.pop()),
        _ => Ok(Some(Arc::new(product_predictor(parts).map_err(CliError::config)?))),
    }
}

/// Loads every referenced file and validates the combination. All failures
/// here are configuration errors.
pub fn plan(cfg: &SampleConfig) -> CliResult<SamplePlan> {
    if cfg.n == 0 {
        return Err(CliError::Config("n must be positive".into()));
    }
    let landscape = match &cfg.landscape {
        Some(path) => {
            Some(Landscape::from_json(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let base: Arc<dyn Denoiser> = match (&cfg.model, &landscape) {
        (Some(path), _) => load_model(path)?,
        (None, Some(land)) => Arc::new(ExactDenoiser::new(land.p_data().clone())),
        (None, None) => return Err(CliError::Config("sample needs a model or a landscape".into())),
    };
    let space = base.space();
    if let Some(land) = &landscape {
        if land.space() != space {
            return Err(CliError::Config("model and landscape disagree on length or alphabet".into()));
        }
    }
    let wildtype = match &cfg.wildtype {
        Some(text) => Some(TokenSequence::parse(text, space.alphabet()).map_err(CliError::config)?.tokens().to_vec()),
        None => None,
    };
    let modifier = LogitModifier {
        temperature: cfg.temperature,
        wildtype_weight: cfg.wildtype_weight,
        wildtype,
    };
    let denoiser: Arc<dyn Denoiser> = if modifier.is_identity() && modifier.wildtype.is_none() {
        base
    } else {
        Arc::new(ModifiedDenoiser::new(base, modifier).map_err(CliError::config)?)
    };

    let mut parts = cfg.predictors.iter().map(|p| load_classifier(p)).collect::<CliResult<Vec<_>>>()?;
    if cfg.target_predictor {
        let land = landscape
            .as_ref()
            .ok_or_else(|| CliError::Config("target_predictor needs a landscape".into()))?;
        let table = land.target_table().to_vec();
        let clean = move |x: &TokenSequence| if table[x.encode()] { 1.0 } else { 0.0 };
        parts.push(Arc::new(exact_marginal_predictor(&clean, land.p_data().clone()).map_err(CliError::config)?));
    }
    let predictor = combine(parts)?;
    let early = combine(cfg.early_predictors.iter().map(|p| load_classifier(p)).collect::<CliResult<Vec<_>>>()?)?;

    let mut guidance = GuidanceConfig {
        mode: cfg.mode,
        gamma: cfg.gamma,
        predictor,
        eta: cfg.eta,
        ..GuidanceConfig::none()
    };
    if cfg.mode == GuidanceMode::PredictorFree {
        let path = cfg
            .conditional_model
            .as_ref()
            .ok_or_else(|| CliError::Config("predictor_free needs conditional_model".into()))?;
        guidance.conditional = Some(load_model(path)?);
    }
    match (early, cfg.switch_time) {
        (Some(early), Some(t0)) => guidance = guidance.staged(early, t0),
        (None, None) => {}
        _ => return Err(CliError::Config("early_predictors and switch_time go together".into())),
    }
    guidance.validate(space).map_err(CliError::config)?;
    if cfg.sampler == SamplerKind::Euler && !(cfg.dt > 0.0 && cfg.dt <= MAX_EULER_DT) {
        return Err(CliError::Config(format!("dt must lie in (0, {MAX_EULER_DT}], got {}", cfg.dt)));
    }
    cfg.schedule.validate().map_err(CliError::config)?;
    Ok(SamplePlan { denoiser, guidance })
}

/// Runs the chains of a resolved plan.
pub fn run(cfg: &SampleConfig, plan: &SamplePlan) -> CliResult<SampleArtifacts> {
    let den = plan.denoiser.as_ref();
    let guidance = &plan.guidance;
    let (outputs, diag): (_, BatchDiagnostics) = match cfg.sampler {
        SamplerKind::Aoarm => {
            let opts = AoarmOptions {
                record_path: cfg.record_paths,
                jump_schedule: Some(cfg.schedule),
            };
            sample_chains(cfg.n, cfg.seed, |rng| aoarm_sample(den, guidance, &opts, rng))
        }
        SamplerKind::Euler => {
            let opts = EulerOptions {
                dt: cfg.dt,
                rule: cfg.euler_rule,
                record_path: cfg.record_paths,
                ..EulerOptions::default()
            };
            sample_chains(cfg.n, cfg.seed, |rng| euler_sample(den, guidance, &cfg.schedule, &opts, rng))
        }
    }
    .map_err(CliError::runtime)?;

    let mut samples = String::new();
    for o in &outputs {
        samples.push_str(&o.sequence.to_string());
        samples.push('\n');
    }
    let paths = if cfg.record_paths {
        let mut text = String::new();
        for o in &outputs {
            let path = o
                .path
                .as_ref()
                .ok_or_else(|| CliError::Runtime("sampler returned no path".into()))?;
            text.push_str(&path.to_json_line().map_err(CliError::runtime)?);
            text.push('\n');
        }
        Some(text)
    } else {
        None
    };
    let record = DiagnosticsRecord {
        chains: diag.chains,
        overflow_steps: diag.totals.overflow_steps,
        predictor_calls: diag.totals.predictor_calls,
        gradient_calls: diag.totals.gradient_calls,
        denoiser_calls: diag.totals.denoiser_calls,
    };
    Ok(SampleArtifacts {
        samples,
        paths,
        diagnostics: serde_json::to_string_pretty(&record).map_err(CliError::runtime)? + "\n",
        wall_time_secs: diag.wall_time_secs,
    })
}

impl SampleArtifacts {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let put = |name: &str, text: &str| fs::write(dir.join(name), text).map_err(CliError::runtime);
        put(SAMPLES_FILE, &self.samples)?;
        if let Some(paths) = &self.paths {
            put(PATHS_FILE, paths)?;
        }
        put(DIAGNOSTICS_FILE, &self.diagnostics)
    }
}

/// Plans, runs and writes a sampling job into `cfg.output_dir`.
pub fn cmd_sample(cfg: &SampleConfig) -> CliResult<SampleArtifacts> {
    let plan = plan(cfg)?;
    write_resolved(&cfg.output_dir, cfg)?;
    let artifacts = run(cfg, &plan)?;
    artifacts.write(&cfg.output_dir)?;
    Ok(artifacts)
}
