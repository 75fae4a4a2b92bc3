//! Post-processing, detection scoring and statistical comparison.

pub mod f1;
pub mod postprocess;
pub mod psds;
pub mod stats;

pub use crate::config::{EvalConfig, PsdsConfig};
pub use f1::{classwise_f1, macro_f1, ClassScore};
pub use postprocess::{decode_clip, median_filter, segment, weak_mask, DecodeParams, Event};
pub use psds::{match_events, psds, OperatingPoint, PsdsResult};
pub use stats::{anova_oneway, ordering, ptukey, qtukey, tukey_hsd, Anova, Tukey};
