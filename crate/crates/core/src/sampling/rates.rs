use crate::alphabet::MaskedSequence;
use crate::denoising::{Denoiser, PerPositionPosterior};
use crate::error::{Error, Result};
use crate::schedule::Schedule;

use super::config::{GuidanceConfig, GuidanceMode};

/// Times this close to one are rejected: the hazard diverges there.
pub const TIME_HORIZON_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEntry {
    pub position: usize,
    pub token: usize,
    pub rate: f64,
}

/// Outgoing jump rates from `source`: one entry per (masked position, real
/// symbol), ordered by position then symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSet {
    source: MaskedSequence,
    time: f64,
    /// Factor applied to the posterior rows, normally the hazard at `time`.
    scale: f64,
    entries: Vec<RateEntry>,
}

impl RateSet {
    pub(crate) fn from_rows(source: &MaskedSequence, time: f64, scale: f64, rows: &PerPositionPosterior) -> Self {
        let size = rows.size();
        let mut entries = Vec::with_capacity(source.num_masked() * size);
        for d in source.masked_positions() {
            for (s, &p) in rows.row(d).iter().enumerate() {
                entries.push(RateEntry {
                    position: d,
                    token: s,
                    rate: scale * p,
                });
            }
        }
        Self {
            source: source.clone(),
            time,
            scale,
            entries,
        }
    }

    pub fn source(&self) -> &MaskedSequence {
        &self.source
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn entries(&self) -> &[RateEntry] {
        &self.entries
    }

    pub fn rate(&self, position: usize, token: usize) -> f64 {
        self.entries
            .iter()
            .find(|e| e.position == position && e.token == token)
            .map_or(0.0, |e| e.rate)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.rate).sum()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..1.0 - TIME_HORIZON_GUARD).contains(&t) {
        return Err(Error::Domain(format!(
            "rates are defined for t in [0, 1 - {TIME_HORIZON_GUARD}), got {t}"
        )));
    }
    Ok(())
}

/// `R(d, s) = kappa'(t) / (1 - kappa(t)) * p(s | x_t)` at masked `d`.
pub fn unguided_rates(denoiser: &dyn Denoiser, xt: &MaskedSequence, t: f64, schedule: &Schedule) -> Result<RateSet> {
    check_time(t)?;
    let post = denoiser.posterior(xt)?;
    Ok(RateSet::from_rows(xt, t, schedule.hazard(t), &post))
}

/// Counts of model evaluations made while guiding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct CallCounter {
    pub predictor: u64,
    pub gradient: u64,
}

/// Tilts `rates` toward the property.
pub fn guide_rates(rates: &RateSet, cfg: &GuidanceConfig) -> Result<RateSet> {
    guide_rates_counted(rates, cfg, &mut CallCounter::default())
}

pub(crate) fn guide_rates_counted(
    rates: &RateSet,
    cfg: &GuidanceConfig,
    calls: &mut CallCounter,
) -> Result<RateSet> {
    let gamma = cfg.gamma;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    if gamma == 0.0 || cfg.mode == GuidanceMode::None {
        return Ok(rates.clone());
    }
    let source = &rates.source;
    let mut out = rates.clone();
    match cfg.mode {
        GuidanceMode::None => unreachable!(),
        GuidanceMode::Exact => {
            let predictor = cfg.predictor_at(rates.time)?;
            let base = predictor.likelihood(source)?;
            calls.predictor += 1;
            for e in &mut out.entries {
                // Zero-rate moves stay zero; their targets may lie outside the
                // data support where the predictor is undefined.
                if e.rate > 0.0 {
                    let tilted = predictor.likelihood(&source.with_token(e.position, e.token))?;
                    calls.predictor += 1;
                    e.rate *= (tilted / base).powf(gamma);
                }
            }
        }
        GuidanceMode::Tag => {
            let predictor = cfg.predictor_at(rates.time)?;
            let surface = predictor.gradient_surface(source)?;
            calls.gradient += 1;
            for e in &mut out.entries {
                let from = source.tokens()[e.position];
                e.rate *= (gamma * surface.log_ratio(e.position, from, e.token)).exp();
            }
        }
        GuidanceMode::PredictorFree => {
            let cond = cfg
                .conditional
                .as_ref()
                .ok_or_else(|| Error::Domain("predictor-free guidance needs a conditional denoiser".into()))?;
            let cond_rates = RateSet::from_rows(source, rates.time, rates.scale, &cond.posterior(source)?);
            for (e, c) in out.entries.iter_mut().zip(&cond_rates.entries) {
                e.rate = c.rate.powf(gamma) * e.rate.powf(1.0 - gamma);
            }
        }
        GuidanceMode::Deg => {
            return Err(Error::Unsupported(
                "deg guidance acts on the any-order decoding conditional, not on rates".into(),
            ))
        }
    }
    if let Some(bad) = out.entries.iter().find(|e| !e.rate.is_finite() || e.rate < 0.0) {
        return Err(Error::Domain(format!(
            "guided rate {} at position {} symbol {} is not finite and nonnegative",
            bad.rate, bad.position, bad.token
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::alphabet::{MaskedSequence, SequenceSpace};
    use crate::denoising::ExactDenoiser;
    use crate::predictors::{GradientSurface, Link, NoisyClassifier, TimePredictor};
    use crate::{RandomSource, TabularDistribution};

    fn coin_denoiser(len: usize) -> ExactDenoiser {
        ExactDenoiser::new(Arc::new(TabularDistribution::uniform(SequenceSpace::with_sizes(len, 2).unwrap())))
    }

    #[test]
    fn unguided_examples() {
        let den = coin_denoiser(2);
        let a = den.space().alphabet();
        let xt = MaskedSequence::parse("?A", a).unwrap();
        let rates = unguided_rates(&den, &xt, 0.5, &Schedule::Linear).unwrap();
        assert_eq!(rates.entries().len(), 2);
        assert_eq!(rates.rate(0, 0), 1.0);
        assert_eq!(rates.rate(0, 1), 1.0);
        assert!(rates.entries().iter().all(|e| e.position == 0));
        let at_zero = unguided_rates(&den, &xt, 0.0, &Schedule::Linear).unwrap();
        assert_eq!(at_zero.rate(0, 0), 0.5);
        assert!(matches!(unguided_rates(&den, &xt, 1.0, &Schedule::Linear), Err(Error::Domain(_))));
        assert!(unguided_rates(&den, &xt, 1.0 - 1e-10, &Schedule::Linear).is_err());
    }

    struct Fixed {
        space: SequenceSpace,
    }

    impl TimePredictor for Fixed {
        fn space(&self) -> SequenceSpace {
            self.space
        }

        fn likelihood(&self, xt: &MaskedSequence) -> Result<f64> {
            Ok(if xt.tokens()[0] == 0 { 0.8 } else { 0.4 })
        }
    }

    #[test]
    fn exact_ratio_example_and_zero_gamma() {
        let den = coin_denoiser(1);
        let space = den.space();
        let xt = space.all_masked();
        let rates = unguided_rates(&den, &xt, 0.5, &Schedule::Linear).unwrap();
        // Rate 1.0 toward symbol 0, source likelihood 0.4, target 0.8.
        let pred: Arc<dyn TimePredictor> = Arc::new(Fixed { space });
        let guided = guide_rates(&rates, &GuidanceConfig::exact(pred.clone(), 1.0)).unwrap();
        assert_eq!(guided.rate(0, 0), 2.0);
        assert_eq!(guided.rate(0, 1), 1.0);
        assert_eq!(guide_rates(&rates, &GuidanceConfig::exact(pred.clone(), 0.0)).unwrap(), rates);
        assert!(matches!(
            guide_rates(&rates, &GuidanceConfig::tag(pred, 1.0)),
            Err(Error::Capability(_))
        ));
    }

    fn affine_model(space: SequenceSpace, rng: &mut RandomSource) -> NoisyClassifier {
        let k = space.size() + 1;
        let single = (0..space.len() * k).map(|_| -rng.uniform()).collect();
        NoisyClassifier::from_parts(space, Link::LogLinear, -0.5, single, vec![]).unwrap()
    }

    #[test]
    fn tag_equals_exact_for_affine_log_likelihood() {
        let space = SequenceSpace::with_sizes(4, 3).unwrap();
        let mut rng = RandomSource::new(21, 0);
        let den = ExactDenoiser::new(Arc::new(
            TabularDistribution::from_unnormalized(space, (0..81).map(|_| rng.uniform()).collect()).unwrap(),
        ));
        for _ in 0..20 {
            let pred: Arc<dyn TimePredictor> = Arc::new(affine_model(space, &mut rng));
            let tokens = (0..4).map(|_| if rng.uniform() < 0.5 { 3 } else { (rng.uniform() * 3.0) as usize }).collect();
            let xt = MaskedSequence::new(tokens, space.alphabet()).unwrap();
            let rates = unguided_rates(&den, &xt, 0.3, &Schedule::Linear).unwrap();
            for gamma in [0.5, 1.0, 3.0] {
                let exact = guide_rates(&rates, &GuidanceConfig::exact(pred.clone(), gamma)).unwrap();
                let tag = guide_rates(&rates, &GuidanceConfig::tag(pred.clone(), gamma)).unwrap();
                for (a, b) in exact.entries().iter().zip(tag.entries()) {
                    assert!((a.rate - b.rate).abs() <= 1e-9 * a.rate.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn rates_only_at_masked_positions_for_every_mode() {
        let space = SequenceSpace::with_sizes(3, 2).unwrap();
        let den = Arc::new(coin_denoiser(3));
        let mut rng = RandomSource::new(2, 0);
        let pred: Arc<dyn TimePredictor> = Arc::new(affine_model(space, &mut rng));
        let xt = MaskedSequence::parse("?B?", space.alphabet()).unwrap();
        let rates = unguided_rates(den.as_ref(), &xt, 0.2, &Schedule::Linear).unwrap();
        for cfg in [
            GuidanceConfig::exact(pred.clone(), 2.0),
            GuidanceConfig::tag(pred.clone(), 2.0),
            GuidanceConfig::predictor_free(den.clone(), 2.0),
        ] {
            let guided = guide_rates(&rates, &cfg).unwrap();
            assert!(guided.entries().iter().all(|e| xt.is_masked(e.position) && e.token < 2 && e.rate >= 0.0));
        }
        let _ = GradientSurface::zeros(1, 1);
    }
}
