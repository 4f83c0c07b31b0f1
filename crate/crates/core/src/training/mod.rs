//! Contrastive pretraining, supervised finetuning and point prediction.

pub mod config;
pub mod finetune;
pub mod labels;
pub mod log;
pub mod optim;
pub mod predict;
pub mod pretrain;
pub mod schedule;

use candle_core::{DType, Tensor};

use crate::error::Result;
use crate::model::miso::MisoModel;

pub use config::TrainConfig;
pub use finetune::{finetune, finetune_fold, finetune_on, group_points, FoldOutcome, PointGroup};
pub use labels::{AccessLog, LabelStore};
pub use log::{LogRow, TrainLog, LOG_HEADER};
pub use optim::AdamW;
pub use predict::{predict_points, translation_probe, TRANSLATION_TOLERANCE};
pub use pretrain::{contrastive_probe, pretrain};
pub use schedule::cosine_lr;

/// AdamW over every model parameter.
pub fn new_optimizer(model: &MisoModel, lr: f64, weight_decay: f64) -> Result<AdamW> {
    AdamW::new(model.params.all_vars(), lr, weight_decay)
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic_world, SynthConfig};
    use crate::model::miso::{ModelConfig, ModelContext};

    #[test]
    fn zero_lr_step_keeps_parameters_bitwise() {
        let world = generate_synthetic_world(&SynthConfig {
            width: 64,
            height: 64,
            n_points: 60,
            ..SynthConfig::default()
        })
        .unwrap();
        let ctx = ModelContext::from_stack(&world.stack);
        let mut mc = ModelConfig::desk(ctx.satellite_bands.len(), ctx.covariate_bands.len());
        mc.embed_dim = 16;
        let model = MisoModel::new(&mc, &ctx, DType::F32).unwrap();
        let before = model.params.snapshot().unwrap();
        let mut opt = new_optimizer(&model, 0.0, 0.01).unwrap();
        let (mm, geo) = pretrain::contrastive_losses(
            &model,
            &world.stack,
            &[(32, 32)],
            &[vec![(0.1, 0.2), (-0.5, 0.4), (0.7, -0.9)]],
            0.07,
        )
        .unwrap();
        opt.backward_step(&(mm + geo).unwrap()).unwrap();
        assert_eq!(model.params.snapshot().unwrap(), before);
    }
}
