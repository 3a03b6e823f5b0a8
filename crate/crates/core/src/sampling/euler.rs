use serde::{Deserialize, Serialize};

use super::config::{GuidanceConfig, GuidanceMode};
use super::path::{DecodePath, SampleOutput, SamplerDiagnostics};
use super::rates::{guide_rates_counted, CallCounter, RateEntry, RateSet};
use crate::denoising::Denoiser;
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::RandomSource;

/// Largest step size accepted by [`euler_sample`].
pub const MAX_EULER_DT: f64 = 0.1;

/// How one Euler step turns rates into transition probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EulerRule {
    /// Each masked position independently jumps with probability
    /// `sum_s R(d, s) dt`, so several positions may unmask in one step.
    #[default]
    PerPosition,
    /// One categorical over the whole state, `delta + R dt`: at most one
    /// position unmasks per step.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerOptions {
    pub dt: f64,
    pub rule: EulerRule,
    pub record_path: bool,
    /// Reuse the guided rates while the state is unchanged. Neither the
    /// denoiser nor the predictor reads the clock, so the rates at a later
    /// step differ only by the hazard factor and reuse is exact. Disabled
    /// automatically across a predictor switch.
    pub reuse_rates: bool,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self {
            dt: 0.001,
            rule: EulerRule::PerPosition,
            record_path: false,
            reuse_rates: true,
        }
    }
}

impl EulerOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }
}

/// Guided rates at unit hazard; the rates at time `t` are these times
/// `schedule.hazard(t)`.
fn unit_rates(
    denoiser: &dyn Denoiser,
    state: &crate::MaskedSequence,
    t: f64,
    cfg: &GuidanceConfig,
    diag: &mut SamplerDiagnostics,
) -> Result<Vec<RateEntry>> {
    let post = denoiser.posterior(state)?;
    diag.denoiser_calls += 1;
    let base = RateSet::from_rows(state, t, 1.0, &post);
    let mut calls = CallCounter::default();
    let guided = guide_rates_counted(&base, cfg, &mut calls)?;
    diag.predictor_calls += calls.predictor;
    diag.gradient_calls += calls.gradient;
    if cfg.mode == GuidanceMode::PredictorFree && !cfg.is_unguided() {
        diag.denoiser_calls += 1;
    }
    Ok(guided.entries().to_vec())
}

/// Integrates the masked chain from the all-masked state at `t = 0` with a
/// first-order Euler rule until `1 - dt`. Any
/// positions still masked then are drawn from the guided per-position rows
/// of the final state.
pub fn euler_sample(
    denoiser: &dyn Denoiser,
    cfg: &GuidanceConfig,
    schedule: &Schedule,
    options: &EulerOptions,
    rng: &mut RandomSource,
) -> Result<SampleOutput> {
    let dt = options.dt;
    if !(dt > 0.0 && dt <= MAX_EULER_DT) {
        return Err(Error::Domain(format!("dt must lie in (0, {MAX_EULER_DT}], got {dt}")));
    }
    let space = denoiser.space();
    cfg.validate(space)?;
    schedule.validate()?;
    if cfg.mode == GuidanceMode::Deg {
        return Err(Error::Unsupported(
            "deg guidance applies to any-order decoding; use exact or tag with the Euler sampler".into(),
        ));
    }
    let steps = ((1.0 - dt) / dt + 1e-9).floor() as usize;
    let mut state = space.all_masked();
    let mut path = options.record_path.then(|| DecodePath::start(&state));
    let mut diag = SamplerDiagnostics::default();
    let mut cached: Option<(f64, Vec<RateEntry>, f64)> = None;
    let mut weights: Vec<f64> = Vec::new();

    for k in 0..steps {
        if state.num_masked() == 0 {
            break;
        }
        let t = k as f64 * dt;
        let stale = match &cached {
            None => true,
            Some((t0, _, _)) => !options.reuse_rates || cfg.switches_between(*t0, t),
        };
        if stale {
            let entries = unit_rates(denoiser, &state, t, cfg, &mut diag)?;
            let total = entries.iter().map(|e| e.rate).sum();
            cached = Some((t, entries, total));
        }
        let (_, entries, total) = cached.as_ref().expect("filled above");
        let scale = schedule.hazard(t) * dt;
        let mut changed = false;
        match options.rule {
            EulerRule::Joint => {
                let outflow = scale * total;
                let jump = if outflow > 1.0 {
                    diag.overflow_steps += 1;
                    true
                } else {
                    rng.uniform() < outflow
                };
                if jump {
                    weights.clear();
                    weights.extend(entries.iter().map(|e| e.rate));
                    if let Some(pick) = rng.categorical(&weights) {
                        let RateEntry { position, token, .. } = entries[pick];
                        state.set(position, token);
                        if let Some(p) = path.as_mut() {
                            p.push(position, Some(t + dt), &state);
                        }
                        changed = true;
                    }
                }
            }
            EulerRule::PerPosition => {
                // Entries come grouped by position; every position reads the
                // rates of the state at the start of the step.
                let mut overflow = false;
                for row in entries.chunk_by(|a, b| a.position == b.position) {
                    let outflow = scale * row.iter().map(|e| e.rate).sum::<f64>();
                    let jump = if outflow > 1.0 {
                        overflow = true;
                        true
                    } else {
                        rng.uniform() < outflow
                    };
                    if !jump {
                        continue;
                    }
                    weights.clear();
                    weights.extend(row.iter().map(|e| e.rate));
                    if let Some(pick) = rng.categorical(&weights) {
                        let RateEntry { position, token, .. } = row[pick];
                        state.set(position, token);
                        if let Some(p) = path.as_mut() {
                            p.push(position, Some(t + dt), &state);
                        }
                        changed = true;
                    }
                }
                diag.overflow_steps += u64::from(overflow);
            }
        }
        if changed {
            cached = None;
        }
    }

    if state.num_masked() > 0 {
        let t_end = steps as f64 * dt;
        let entries = unit_rates(denoiser, &state, t_end, cfg, &mut diag)?;
        let finished = state.clone();
        let mut completed = state.clone();
        for (step, d) in finished.masked_positions().into_iter().enumerate() {
            weights.clear();
            weights.extend(entries.iter().filter(|e| e.position == d).map(|e| e.rate));
            let token = rng.categorical(&weights).ok_or(Error::DegenerateStep {
                step: steps + step,
                position: d,
            })?;
            completed.set(d, token);
            if let Some(p) = path.as_mut() {
                p.push(d, Some(t_end), &completed);
            }
        }
        state = completed;
    }

    Ok(SampleOutput {
        sequence: state.to_clean()?,
        path,
        diagnostics: diag,
    })
}
