//! Command-line driver: the verification suite, single sampling runs and
//! benchmark campaigns, all configured by strict JSON files.

pub mod config;
pub mod error;
pub mod sample;
pub mod verify;

use guidesampler_bench::{campaign_property, run_campaign, CampaignOutcome};

pub use config::{CampaignRunConfig, SampleConfig, SamplerKind, VerifyConfig};
pub use error::{CliError, CliResult};

/// Runs a campaign and writes its CSV, summary and landscape plus the
/// resolved configuration into `cfg.output_dir`.
pub fn cmd_campaign(cfg: &CampaignRunConfig) -> CliResult<CampaignOutcome> {
    cfg.campaign.validate().map_err(CliError::config)?;
    config::write_resolved(&cfg.output_dir, cfg)?;
    let outcome = run_campaign(&cfg.campaign).map_err(CliError::runtime)?;
    outcome.write(&cfg.output_dir).map_err(CliError::runtime)?;
    Ok(outcome)
}

/// Deterministic per-arm table for stdout.
pub fn render_campaign(outcome: &CampaignOutcome) -> String {
    let mut out = format!(
        "{:<24} {:>5}  {:>24}  {:>8}  {:>8}\n",
        "arm", "seeds", "success (95% CI)", "divers.", "novelty"
    );
    for r in &outcome.summary.arms {
        out.push_str(&format!(
            "{:<24} {:>5}  {:.4} [{:.4}, {:.4}]  {:>8.3}  {:>8.3}\n",
            r.arm,
            r.seeds,
            r.success_rate.mean,
            r.success_rate.lower,
            r.success_rate.upper,
            r.diversity.mean,
            r.novelty.mean
        ));
    }
    let property = campaign_property(&outcome.summary);
    out.push_str(&format!(
        "target mass {:.6}; guidance property {}\n",
        outcome.summary.target_mass,
        if property.pass { "holds" } else { "fails" }
    ));
    for line in property.details {
        out.push_str("  ");
        out.push_str(&line);
        out.push('\n');
    }
    out
}
