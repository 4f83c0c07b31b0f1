use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::DEFAULT_TEMPERATURE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    /// Optimizer steps per pretraining epoch.
    pub pretrain_steps_per_epoch: usize,
    /// Tiles per pretraining step; each contributes its own in-tile InfoNCE.
    pub pretrain_tiles_per_step: usize,
    pub pretrain_lr: f64,
    /// Query locations `M` sampled per pretraining tile.
    pub locations_per_tile: usize,
    pub temperature: f64,
    pub finetune_epochs: usize,
    /// Upper bound on labeled points per finetuning step.
    pub batch_size: usize,
    pub warmup_lr: f64,
    pub max_lr: f64,
    /// Fraction of finetuning steps spent in linear warm-up.
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    /// Labeled points are grouped on a lattice of this many tile widths.
    pub group_spacing: f64,
    /// Maximum random tile offset, in tile widths, per axis.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Reduced schedule for CPU runs. Learning rates are raised since the
    /// encoders train from scratch over few steps.
    pub fn desk() -> Self {
        TrainConfig {
            pretrain_epochs: 5,
            pretrain_steps_per_epoch: 40,
            pretrain_tiles_per_step: 2,
            pretrain_lr: 1e-3,
            locations_per_tile: 64,
            temperature: DEFAULT_TEMPERATURE,
            finetune_epochs: 5,
            batch_size: 32,
            warmup_lr: 1e-5,
            max_lr: 1e-3,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            group_spacing: 0.125,
            jitter: 0.25,
            seed: 0,
        }
    }

    pub fn paper() -> Self {
        TrainConfig {
            pretrain_epochs: 50,
            pretrain_steps_per_epoch: 1000,
            pretrain_tiles_per_step: 32,
            pretrain_lr: 1e-4,
            locations_per_tile: 64,
            temperature: DEFAULT_TEMPERATURE,
            finetune_epochs: 30,
            batch_size: 32,
            warmup_lr: 5e-7,
            max_lr: 5e-5,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            group_spacing: 0.125,
            jitter: 0.25,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.pretrain_epochs == 0 || self.finetune_epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.pretrain_steps_per_epoch == 0 || self.pretrain_tiles_per_step == 0 || self.batch_size == 0 {
            return bad("steps, tiles per step and batch size must be positive".into());
        }
        if self.locations_per_tile < 2 {
            return bad(format!(
                "InfoNCE needs at least 2 locations per tile, got {}",
                self.locations_per_tile
            ));
        }
        if !(self.warmup_lr >= 0.0 && self.warmup_lr <= self.max_lr) || !(self.pretrain_lr >= 0.0) {
            return bad(format!("need 0 <= warmup_lr <= max_lr, got {} > {}", self.warmup_lr, self.max_lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]".into());
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if !(self.group_spacing > 0.0 && self.jitter >= 0.0 && self.group_spacing / 2.0 + self.jitter <= 0.5) {
            return bad(format!(
                "group_spacing/2 + jitter must be at most 0.5 so every point stays in its tile, got {} and {}",
                self.group_spacing, self.jitter
            ));
        }
        Ok(())
    }
}
