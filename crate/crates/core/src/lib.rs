//! Guided generation of fixed-length discrete sequences.
//!
//! The crate implements masking-noise discrete flow matching over an
//! alphabet of `S` symbols and sequences of length `D`, the sampler
//! equivalence between the continuous-time masked chain and any-order
//! autoregressive decoding, and predictor guidance on top of both:
//!
//! * [`core`](crate::alphabet): alphabets, sequences, schedules, tabular
//!   distributions and reproducible random streams,
//! * [`denoising`]: exact and parametric denoisers plus exact loss evaluators,
//! * [`predictors`]: property predictors on partially masked inputs,
//! * [`sampling`]: Euler integration, any-order decoding and guidance,
//! * [`oracle`]: brute-force posteriors and goodness-of-fit verdicts.
//!
//! Everything small enough to enumerate can be checked against an exact
//! oracle, which is how the test-suite is organised.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alphabet;
pub mod denoising;
pub mod error;
pub mod masking;
pub mod oracle;
pub mod predictors;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod tabular;

pub use alphabet::{decode_index, encode_index, Alphabet, MaskedSequence, SequenceSpace, TokenSequence};
pub use error::{Error, Result};
pub use masking::mask_forward;
pub use rng::RandomSource;
pub use schedule::Schedule;
pub use tabular::{consistent_completions, MaskedMassTable, TabularDistribution};

/// Floor applied to every predictor likelihood before ratios are formed.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;
