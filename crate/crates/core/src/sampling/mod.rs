//! Unconditional and guided generation.
//!
//! Two samplers produce the same law: [`euler_sample`] integrates the
//! continuous-time masked chain, and [`aoarm_sample`] draws a uniform
//! unmasking order and decodes one position at a time. Guidance tilts either
//! toward `p(x | y) ∝ p(y | x)^γ p(x)`.

mod aoarm;
mod config;
mod euler;
mod jumps;
mod path;
mod rates;

pub use aoarm::{aoarm_sample, guided_conditional, AoarmOptions};
pub use config::{GuidanceConfig, GuidanceMode};
pub use euler::{euler_sample, EulerOptions, EulerRule, MAX_EULER_DT};
pub use jumps::{lemma1_density, sample_jump_times, JumpTimes};
pub use path::{sample_chains, BatchDiagnostics, DecodePath, SampleOutput, SamplerDiagnostics};
pub use rates::{guide_rates, unguided_rates, RateEntry, RateSet, TIME_HORIZON_GUARD};
