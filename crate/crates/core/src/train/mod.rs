//! Mean-teacher semi-supervised training.

pub mod adam;
pub mod augment;
pub mod ema;
pub mod loss;
pub mod run;

pub use adam::Adam;
pub use ema::ema_update;
pub use loss::{consistency_loss, consistency_ramp, supervised_terms, total_loss, BatchTargets, LossVars};
pub use run::{decode_params, eval_batch, steps_per_epoch, train, EpochLog, TrainData, TrainOutcome, Trainer};
