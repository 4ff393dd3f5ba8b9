//! Encoder fine-tuning, adversarial training, checkpoints and loss logs.

mod bundle;
mod config;
mod encoder;
mod gan;
mod log;

pub use bundle::{GanBundle, OptimState, BUNDLE_VERSION};
pub use config::{EncoderFinetuneConfig, GanTrainConfig, StageConfig};
pub use encoder::{finetune_encoder, FinetuneReport, LabeledPool, StageReport};
pub use gan::{batch_embeddings, train_gan, train_step, TrainOutputs};
pub use log::{read_log, LogRecord, LossLog};
