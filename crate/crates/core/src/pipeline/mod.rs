//! Network assembly, training, evaluation and checkpoints.

mod ablate;
mod checkpoint;
mod eval;
mod model;
mod optim;
mod train;

pub use ablate::{format_table, median_epe, offset_ranges, run_ablation, run_row, AblationPlan, AblationRow};
pub use checkpoint::{Checkpoint, RngState, MAGIC, VERSION};
pub use eval::{evaluate, upsample_map, EvalReport, HEAD_NAMES};
pub use model::{
    Model, ModelConfig, OffsetMode, Outputs, Prediction, Preset, Stage2Mode, Variant, COARSE_SCALE, STAGE2_SCALE,
};
pub use optim::{Adam, AdamState};
pub use train::{StepStats, TrainConfig, TrainReport, Trainer};
