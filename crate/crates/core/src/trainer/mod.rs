//! Alternating discriminator/generator training with random target labels,
//! cycle reconstruction, a step learning-rate schedule and checkpoints.

mod checkpoint;
mod config;
mod run;
mod step;

pub use checkpoint::{checkpoint_config, checkpoint_discriminators, load_generator};
pub use config::{
    configure_ablation, lr_schedule, AblationMode, AdamSettings, BackboneChoice, TrainConfig, Wiring,
};
pub use run::{checkpoint_path, read_run_log, run_training, RunSummary, CHECKPOINT_DIR, RUN_LOG};
pub use step::{build_backbone, select_supervision, Batch, StepStats, Trainer};
