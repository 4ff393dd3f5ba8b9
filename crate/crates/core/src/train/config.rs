use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{AdvForm, PclConfig, DEFAULT_LAMBDA_NSE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub lambda_nse: f64,
    pub seed: u64,
    pub adv_form: AdvForm,
    pub pcl: PclConfig,
    pub checkpoint_every: usize,
    /// `false` feeds a fixed zero embedding to every FiLM site.
    pub use_embeddings: bool,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            lambda_nse: DEFAULT_LAMBDA_NSE,
            seed: 0,
            adv_form: AdvForm::NonSaturating,
            pcl: PclConfig::default(),
            checkpoint_every: 50,
            use_embeddings: true,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.lambda_nse >= 0.0) {
            return Err(Error::Config(format!("lambda_nse {} must be non-negative", self.lambda_nse)));
        }
        self.pcl.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-4,
            batch_size: 8,
        }
    }
}

/// Noise-type classification first, then one class per target utterance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderFinetuneConfig {
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub seed: u64,
}
