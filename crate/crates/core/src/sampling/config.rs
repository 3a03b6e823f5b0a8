use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alphabet::SequenceSpace;
use crate::denoising::Denoiser;
use crate::error::{Error, Result};
use crate::predictors::TimePredictor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    None,
    /// Likelihood ratio from one predictor call per candidate.
    Exact,
    /// Likelihood ratio from a first-order expansion of the log-likelihood.
    Tag,
    /// Exact guidance of the per-step conditional in any-order decoding.
    Deg,
    /// Geometric mix of a conditional and an unconditional denoiser.
    PredictorFree,
}

impl GuidanceMode {
    pub fn name(self) -> &'static str {
        match self {
            GuidanceMode::None => "none",
            GuidanceMode::Exact => "exact",
            GuidanceMode::Tag => "tag",
            GuidanceMode::Deg => "deg",
            GuidanceMode::PredictorFree => "predictor_free",
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a sampler tilts the unconditional model toward `p(x | y)`.
///
/// With `early_predictor` set, it is used while `t < switch_time` and
/// `predictor` afterwards. The any-order sampler has no clock and compares
/// the unmasked fraction against `switch_time` instead.
#[derive(Clone, Default)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    pub gamma: f64,
    pub predictor: Option<Arc<dyn TimePredictor>>,
    pub early_predictor: Option<Arc<dyn TimePredictor>>,
    pub switch_time: f64,
    /// Conditional denoiser for predictor-free guidance.
    pub conditional: Option<Arc<dyn Denoiser>>,
    /// Stochasticity level; only 0 is supported.
    pub eta: f64,
}

impl fmt::Debug for GuidanceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GuidanceConfig")
            .field("mode", &self.mode)
            .field("gamma", &self.gamma)
            .field("predictor", &self.predictor.is_some())
            .field("early_predictor", &self.early_predictor.is_some())
            .field("switch_time", &self.switch_time)
            .field("conditional", &self.conditional.is_some())
            .field("eta", &self.eta)
            .finish()
    }
}

impl GuidanceConfig {
    pub fn none() -> Self {
        Self::default()
    }

    fn with_predictor(mode: GuidanceMode, predictor: Arc<dyn TimePredictor>, gamma: f64) -> Self {
        Self {
            mode,
            gamma,
            predictor: Some(predictor),
            ..Self::default()
        }
    }

    pub fn exact(predictor: Arc<dyn TimePredictor>, gamma: f64) -> Self {
        Self::with_predictor(GuidanceMode::Exact, predictor, gamma)
    }

    pub fn tag(predictor: Arc<dyn TimePredictor>, gamma: f64) -> Self {
        Self::with_predictor(GuidanceMode::Tag, predictor, gamma)
    }

    pub fn deg(predictor: Arc<dyn TimePredictor>, gamma: f64) -> Self {
        Self::with_predictor(GuidanceMode::Deg, predictor, gamma)
    }

    pub fn predictor_free(conditional: Arc<dyn Denoiser>, gamma: f64) -> Self {
        Self {
            mode: GuidanceMode::PredictorFree,
            gamma,
            conditional: Some(conditional),
            ..Self::default()
        }
    }

    /// Uses `early` before `switch_time` and the configured predictor after.
    pub fn staged(mut self, early: Arc<dyn TimePredictor>, switch_time: f64) -> Self {
        self.early_predictor = Some(early);
        self.switch_time = switch_time;
        self
    }

    /// Checks that the configuration is usable with a model over `space`.
    pub fn validate(&self, space: SequenceSpace) -> Result<()> {
        if self.eta != 0.0 {
            return Err(Error::Unsupported(format!(
                "stochasticity eta = {} is not supported; only eta = 0",
                self.eta
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must be finite and nonnegative, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.switch_time) {
            return Err(Error::Domain(format!("switch time {} outside [0, 1]", self.switch_time)));
        }
        let check = |other: SequenceSpace, what: &str| {
            if other != space {
                Err(Error::Shape(format!(
                    "{what} is over D={} S={} but the model is over D={} S={}",
                    other.len(),
                    other.size(),
                    space.len(),
                    space.size()
                )))
            } else {
                Ok(())
            }
        };
        match self.mode {
            GuidanceMode::None => {}
            GuidanceMode::Exact | GuidanceMode::Tag | GuidanceMode::Deg => {
                let p = self
                    .predictor
                    .as_ref()
                    .ok_or_else(|| Error::Domain(format!("{} guidance needs a predictor", self.mode)))?;
                check(p.space(), "predictor")?;
                if let Some(early) = &self.early_predictor {
                    check(early.space(), "early predictor")?;
                }
                if self.mode == GuidanceMode::Tag {
                    let all = std::iter::once(p).chain(self.early_predictor.as_ref());
                    if all.into_iter().any(|p| !p.has_gradient()) {
                        return Err(Error::Capability("tag guidance needs a predictor with a gradient surface".into()));
                    }
                }
            }
            GuidanceMode::PredictorFree => {
                let c = self
                    .conditional
                    .as_ref()
                    .ok_or_else(|| Error::Domain("predictor-free guidance needs a conditional denoiser".into()))?;
                check(c.space(), "conditional denoiser")?;
            }
        }
        Ok(())
    }

    /// True when guidance cannot change anything.
    pub fn is_unguided(&self) -> bool {
        self.mode == GuidanceMode::None || self.gamma == 0.0
    }

    /// Predictor in effect at `progress` (time, or unmasked fraction).
    pub(crate) fn predictor_at(&self, progress: f64) -> Result<&Arc<dyn TimePredictor>> {
        match (&self.early_predictor, progress < self.switch_time) {
            (Some(early), true) => Ok(early),
            _ => self
                .predictor
                .as_ref()
                .ok_or_else(|| Error::Domain(format!("{} guidance needs a predictor", self.mode))),
        }
    }

    /// Whether the active predictor changes between the two progress values.
    pub(crate) fn switches_between(&self, a: f64, b: f64) -> bool {
        self.early_predictor.is_some() && (a < self.switch_time) != (b < self.switch_time)
    }
}
