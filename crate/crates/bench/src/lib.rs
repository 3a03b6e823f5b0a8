//! Synthetic sequence-design campaigns.
//!
//! A [`Landscape`] plants a Gibbs data distribution and one or two fitness
//! functions over an enumerable sequence space. Campaign arms then spend a
//! fixed sampling budget in different ways (guidance, post-hoc filtering,
//! refitting on the best labeled sequences) and are scored against the true
//! fitness with success rate, diversity and novelty.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod campaign;
mod data;
mod error;
mod landscape;
mod metrics;

pub use campaign::{
    ArmSamples, Interval,
    campaign_property, run_campaign, run_posthoc_filter, run_refit_baseline, ArmKind, ArmSpec, CampaignConfig,
    CampaignOutcome, CampaignResult, CampaignSummary, PropertyCheck, SummaryRow, MATCHED_RATIO,
};
pub use data::{draw_labeled, labels_at_quantile, load_labeled_csv, write_labeled_csv, LabeledSet};
pub use error::{Error, Result};
pub use landscape::{make_landscape, Landscape, LandscapeSpec, Potts};
pub use metrics::{diversity, metrics, novelty, Metrics};
