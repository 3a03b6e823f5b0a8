use serde::{Deserialize, Serialize};

use super::config::{GuidanceConfig, GuidanceMode};
use super::jumps::sample_jump_times;
use super::path::{DecodePath, SampleOutput, SamplerDiagnostics};
use crate::alphabet::MaskedSequence;
use crate::denoising::Denoiser;
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::{RandomSource, LIKELIHOOD_FLOOR};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoarmOptions {
    pub record_path: bool,
    /// Attach jump times drawn under this schedule to the recorded path.
    pub jump_schedule: Option<Schedule>,
}

/// Unnormalized guided weights over the `S` real symbols for unmasking
/// `position` of `context`. Takes no time argument: the conditional depends
/// on the state alone.
pub fn guided_conditional(
    denoiser: &dyn Denoiser,
    context: &MaskedSequence,
    position: usize,
    cfg: &GuidanceConfig,
) -> Result<Vec<f64>> {
    guided_conditional_counted(denoiser, context, position, cfg, &mut SamplerDiagnostics::default())
}

fn guided_conditional_counted(
    denoiser: &dyn Denoiser,
    context: &MaskedSequence,
    position: usize,
    cfg: &GuidanceConfig,
    diag: &mut SamplerDiagnostics,
) -> Result<Vec<f64>> {
    if !context.is_masked(position) {
        return Err(Error::Domain(format!("position {position} is already unmasked")));
    }
    let post = denoiser.posterior(context)?;
    diag.denoiser_calls += 1;
    let mut weights = post.row(position).to_vec();
    if cfg.is_unguided() {
        return Ok(weights);
    }
    let gamma = cfg.gamma;
    let progress = 1.0 - context.num_masked() as f64 / context.len() as f64;
    match cfg.mode {
        GuidanceMode::None => {}
        GuidanceMode::Deg | GuidanceMode::Exact => {
            let predictor = cfg.predictor_at(progress)?;
            for (s, w) in weights.iter_mut().enumerate() {
                if *w > 0.0 {
                    let lik = predictor.likelihood(&context.with_token(position, s))?;
                    diag.predictor_calls += 1;
                    *w *= lik.powf(gamma);
                }
            }
        }
        GuidanceMode::Tag => {
            let predictor = cfg.predictor_at(progress)?;
            let surface = predictor.gradient_surface(context)?;
            diag.gradient_calls += 1;
            let from = context.tokens()[position];
            for (s, w) in weights.iter_mut().enumerate() {
                *w *= (gamma * surface.log_ratio(position, from, s)).exp();
            }
        }
        GuidanceMode::PredictorFree => {
            let cond = cfg
                .conditional
                .as_ref()
                .ok_or_else(|| Error::Domain("predictor-free guidance needs a conditional denoiser".into()))?;
            let cond_post = cond.posterior(context)?;
            diag.denoiser_calls += 1;
            for (w, &c) in weights.iter_mut().zip(cond_post.row(position)) {
                *w = c.powf(gamma) * w.powf(1.0 - gamma);
            }
        }
    }
    Ok(weights)
}

/// Any-order autoregressive sampling: a uniform order, then one position at
/// a time from the (guided) conditional normalized over real symbols.
pub fn aoarm_sample(
    denoiser: &dyn Denoiser,
    cfg: &GuidanceConfig,
    options: &AoarmOptions,
    rng: &mut RandomSource,
) -> Result<SampleOutput> {
    let space = denoiser.space();
    cfg.validate(space)?;
    let len = space.len();
    let order = rng.permutation(len);
    let mut state = space.all_masked();
    let mut path = options.record_path.then(|| DecodePath::start(&state));
    let mut diag = SamplerDiagnostics::default();
    for (step, &d) in order.iter().enumerate() {
        let weights = guided_conditional_counted(denoiser, &state, d, cfg, &mut diag)?;
        if weights.iter().all(|&w| !(w >= LIKELIHOOD_FLOOR)) {
            return Err(Error::DegenerateStep { step, position: d });
        }
        let token = rng
            .categorical(&weights)
            .ok_or(Error::DegenerateStep { step, position: d })?;
        state.set(d, token);
        if let Some(p) = path.as_mut() {
            p.push(d, None, &state);
        }
    }
    if let (Some(p), Some(schedule)) = (path.as_mut(), options.jump_schedule.as_ref()) {
        // Jump times are independent of the order and the states.
        p.jump_times = sample_jump_times(len, schedule, rng)?.times;
    }
    Ok(SampleOutput {
        sequence: state.to_clean()?,
        path,
        diagnostics: diag,
    })
}
