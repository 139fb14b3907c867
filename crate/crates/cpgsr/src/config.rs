//! TOML configuration mirroring the core config structs.
//!
//! ```toml
//! [model]
//! m = 5
//! no_pac = false
//!
//! [train]
//! lr0 = 5e-4
//! batch = 4
//!
//! [train.loss]
//! beta = 0.1
//! ```
//!
//! Missing fields take the core defaults; unknown fields are rejected.

use std::path::Path;

use cpgsr_core::loss::LossWeights;
use cpgsr_core::model::{Ablation, ModelConfig};
use cpgsr_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub base_channels: usize,
    pub m: usize,
    pub scale: usize,
    pub depth_multiplier: usize,
    pub unet_levels: usize,
    pub attention_hidden: usize,
    pub no_cdgb: bool,
    pub no_pac: bool,
    pub no_attention: bool,
}

impl From<ModelConfig> for ModelSection {
    fn from(c: ModelConfig) -> Self {
        ModelSection {
            base_channels: c.base_channels,
            m: c.m,
            scale: c.scale,
            depth_multiplier: c.depth_multiplier,
            unet_levels: c.unet_levels,
            attention_hidden: c.attention_hidden,
            no_cdgb: c.ablation.no_cdgb,
            no_pac: c.ablation.no_pac,
            no_attention: c.ablation.no_attention,
        }
    }
}

impl From<ModelSection> for ModelConfig {
    fn from(s: ModelSection) -> Self {
        ModelConfig {
            base_channels: s.base_channels,
            m: s.m,
            scale: s.scale,
            depth_multiplier: s.depth_multiplier,
            unet_levels: s.unet_levels,
            attention_hidden: s.attention_hidden,
            ablation: Ablation {
                no_cdgb: s.no_cdgb,
                no_pac: s.no_pac,
                no_attention: s.no_attention,
            },
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelConfig::default().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub alpha: f64,
    pub beta: f64,
    pub pffl_exponent: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossWeights::default();
        LossSection {
            alpha: l.alpha,
            beta: l.beta,
            pffl_exponent: l.pffl_exponent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr0: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch: usize,
    pub patch: usize,
    pub seed: u64,
    pub steps_per_epoch: usize,
    pub max_steps: usize,
    pub augment: bool,
    pub loss: LossSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection::from(TrainConfig::default())
    }
}

impl From<TrainConfig> for TrainSection {
    fn from(c: TrainConfig) -> Self {
        TrainSection {
            lr0: c.lr0,
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            adam_eps: c.adam_eps,
            max_epochs: c.max_epochs,
            early_stop_patience: c.early_stop_patience,
            batch: c.batch,
            patch: c.patch,
            seed: c.seed,
            steps_per_epoch: c.steps_per_epoch,
            max_steps: c.max_steps,
            augment: c.augment,
            loss: LossSection {
                alpha: c.loss.alpha,
                beta: c.loss.beta,
                pffl_exponent: c.loss.pffl_exponent,
            },
        }
    }
}

impl From<TrainSection> for TrainConfig {
    fn from(s: TrainSection) -> Self {
        TrainConfig {
            lr0: s.lr0,
            adam_beta1: s.adam_beta1,
            adam_beta2: s.adam_beta2,
            adam_eps: s.adam_eps,
            max_epochs: s.max_epochs,
            early_stop_patience: s.early_stop_patience,
            batch: s.batch,
            patch: s.patch,
            seed: s.seed,
            steps_per_epoch: s.steps_per_epoch,
            max_steps: s.max_steps,
            augment: s.augment,
            loss: LossWeights {
                alpha: s.loss.alpha,
                beta: s.loss.beta,
                pffl_exponent: s.loss.pffl_exponent,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Config {
    pub fn parse(text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> ModelConfig {
        self.model.into()
    }

    pub fn train(&self) -> TrainConfig {
        self.train.into()
    }

    /// Both sections converted and validated.
    pub fn resolve(&self) -> AppResult<(ModelConfig, TrainConfig)> {
        let (m, t) = (self.model(), self.train());
        m.validate().map_err(|e| AppError::Config(e.to_string()))?;
        t.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok((m, t))
    }
}
