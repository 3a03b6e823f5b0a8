use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{MaskedSequence, TokenSequence};
use crate::error::Result;
use crate::RandomSource;

/// The realized unmasking trajectory of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodePath {
    /// `permutation[i]` is the position unmasked at step `i`.
    pub permutation: Vec<usize>,
    /// Jump time of each step; empty when not attached.
    pub jump_times: Vec<f64>,
    /// The `D + 1` states from fully masked to clean.
    pub states: Vec<MaskedSequence>,
}

#[derive(Serialize)]
struct PathRecord<'a> {
    permutation: &'a [usize],
    jump_times: &'a [f64],
    states: Vec<String>,
}

impl DecodePath {
    pub(crate) fn start(initial: &MaskedSequence) -> Self {
        Self {
            permutation: Vec::with_capacity(initial.len()),
            jump_times: Vec::with_capacity(initial.len()),
            states: vec![initial.clone()],
        }
    }

    pub(crate) fn push(&mut self, position: usize, time: Option<f64>, state: &MaskedSequence) {
        self.permutation.push(position);
        if let Some(t) = time {
            self.jump_times.push(t);
        }
        self.states.push(state.clone());
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> Result<String> {
        let record = PathRecord {
            permutation: &self.permutation,
            jump_times: &self.jump_times,
            states: self.states.iter().map(ToString::to_string).collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }
}

/// Per-sample counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    /// Euler steps whose total outflow exceeded one and were renormalized.
    pub overflow_steps: u64,
    pub predictor_calls: u64,
    pub gradient_calls: u64,
    pub denoiser_calls: u64,
}

impl SamplerDiagnostics {
    pub fn absorb(&mut self, other: &SamplerDiagnostics) {
        self.overflow_steps += other.overflow_steps;
        self.predictor_calls += other.predictor_calls;
        self.gradient_calls += other.gradient_calls;
        self.denoiser_calls += other.denoiser_calls;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub sequence: TokenSequence,
    pub path: Option<DecodePath>,
    pub diagnostics: SamplerDiagnostics,
}

/// Aggregate counters for a batch of chains plus elapsed wall time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub chains: u64,
    #[serde(flatten)]
    pub totals: SamplerDiagnostics,
    pub wall_time_secs: f64,
}

/// Runs `n` chains, chain `i` on `RandomSource::new(seed, i)`. Chains run on
/// the current rayon pool; results come back in chain order regardless.
pub fn sample_chains<F>(n: usize, seed: u64, chain: F) -> Result<(Vec<SampleOutput>, BatchDiagnostics)>
where
    F: Fn(&mut RandomSource) -> Result<SampleOutput> + Sync,
{
    let started = Instant::now();
    let outputs: Vec<SampleOutput> = (0..n)
        .into_par_iter()
        .map(|i| chain(&mut RandomSource::new(seed, i as u64)))
        .collect::<Result<_>>()?;
    let mut totals = SamplerDiagnostics::default();
    for o in &outputs {
        totals.absorb(&o.diagnostics);
    }
    let diag = BatchDiagnostics {
        chains: n as u64,
        totals,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((outputs, diag))
}
