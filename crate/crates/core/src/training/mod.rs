//! Joint objective, alternating training, checkpoints and evaluation helpers.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod joint;
pub mod pipeline;
pub mod trainer;

pub use checkpoint::{config_hash, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use config::{CaptionSource, ModelConfig, TrainConfig};
pub use eval::{caption_perplexity, gt_caption_records, gt_cider};
pub use joint::{joint_loss, CaptionSet, JointLoss, Phase, StepSpec};
pub use pipeline::{CaptionInput, Pipeline};
pub use trainer::{load_params, loss_log_csv, pipeline_from_checkpoint, LossRecord, Trainer, TrainingData};
