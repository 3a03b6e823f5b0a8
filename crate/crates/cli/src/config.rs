use std::fs;
use std::path::{Path, PathBuf};

use guidesampler_bench::CampaignConfig;
use guidesampler_core::sampling::{EulerRule, GuidanceMode};
use guidesampler_core::Schedule;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "GUIDESAMPLER_SEED";

/// Name of the resolved-configuration copy written next to outputs.
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Check names to run; empty runs all of them.
    pub only: Vec<String>,
    /// Optional parametric denoiser added to the loss-identity check.
    pub model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Aoarm,
    Euler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Parametric denoiser JSON.
    pub model: Option<PathBuf>,
    /// Landscape JSON. Without `model`, its data distribution is sampled
    /// exactly.
    pub landscape: Option<PathBuf>,
    /// Noisy classifier JSON files, combined by product when several.
    pub predictors: Vec<PathBuf>,
    /// Add the exact predictor of the landscape's target region.
    pub target_predictor: bool,
    /// Predictors used before `switch_time`.
    pub early_predictors: Vec<PathBuf>,
    pub switch_time: Option<f64>,
    /// Conditional denoiser JSON for predictor-free guidance.
    pub conditional_model: Option<PathBuf>,
    pub sampler: SamplerKind,
    pub mode: GuidanceMode,
    pub gamma: f64,
    pub dt: f64,
    pub euler_rule: EulerRule,
    pub schedule: Schedule,
    pub temperature: f64,
    pub wildtype_weight: f64,
    pub wildtype: Option<String>,
    pub eta: f64,
    pub n: usize,
    pub seed: u64,
    pub record_paths: bool,
    pub output_dir: PathBuf,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            model: None,
            landscape: None,
            predictors: Vec::new(),
            target_predictor: false,
            early_predictors: Vec::new(),
            switch_time: None,
            conditional_model: None,
            sampler: SamplerKind::Aoarm,
            mode: GuidanceMode::None,
            gamma: 1.0,
            dt: 0.001,
            euler_rule: EulerRule::PerPosition,
            schedule: Schedule::Linear,
            temperature: 1.0,
            wildtype_weight: 0.0,
            wildtype: None,
            eta: 0.0,
            n: 100,
            seed: 0,
            record_paths: true,
            output_dir: PathBuf::from("samples_out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignRunConfig {
    pub campaign: CampaignConfig,
    pub output_dir: PathBuf,
}

impl Default for CampaignRunConfig {
    fn default() -> Self {
        Self {
            campaign: CampaignConfig::default(),
            output_dir: PathBuf::from("campaign_out"),
        }
    }
}

/// Reads a strict JSON config, or the defaults when no path is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The seed from `GUIDESAMPLER_SEED`, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::config(e)),
    }
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(CliError::runtime)
}

/// Creates `dir` and writes the resolved configuration into it.
pub fn write_resolved<T: Serialize>(dir: &Path, value: &T) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), to_pretty_json(value)?).map_err(CliError::runtime)
}
