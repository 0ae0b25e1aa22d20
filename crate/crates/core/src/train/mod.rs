//! Patch-based L2 training with Adam and a validation-plateau schedule.

mod config;
mod loss;
mod patches;
mod schedule;
mod trainer;

pub use config::{parse_key_values, TrainConfig};
pub use loss::{l2_patch_loss, l2_patch_loss_with, LossNormalization};
pub use patches::{center_patch, sample_patches};
pub use schedule::PlateauSchedule;
pub use trainer::{evaluate_loss, train, LossReport, TrainOutcome};
