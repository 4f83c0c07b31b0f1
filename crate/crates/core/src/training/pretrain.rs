use std::collections::BTreeMap;
use std::path::Path;

use candle_core::Tensor;
use rand::Rng;

use crate::data::stack::CovariateStack;
use crate::data::tile::{crop_tile_at_pixel, Tile};
use crate::error::{Error, Result};
use crate::model::layers::init_rng;
use crate::model::miso::MisoModel;
use crate::objectives::{geo_alignment_loss, multimodal_alignment_loss};
use crate::training::config::TrainConfig;
use crate::training::log::{LogRow, TrainLog};
use crate::training::{new_optimizer, scalar};

const PRETRAIN_STREAM: u64 = 10;

/// Contrastive losses averaged over tiles; each tile's InfoNCE terms use
/// only its own query locations as negatives.
pub fn contrastive_losses(
    model: &MisoModel,
    stack: &CovariateStack,
    centers: &[(i64, i64)],
    queries: &[Vec<(f64, f64)>],
    temperature: f64,
) -> Result<(Tensor, Tensor)> {
    if centers.is_empty() || centers.len() != queries.len() {
        return Err(Error::InvalidArgument("need one query set per tile".into()));
    }
    let tiles = centers
        .iter()
        .map(|&(c, r)| crop_tile_at_pixel(stack, c, r, model.config.tile_size()))
        .collect::<Result<Vec<_>>>()?;
    let tagged: Vec<(usize, (f64, f64))> = queries
        .iter()
        .enumerate()
        .flat_map(|(t, q)| q.iter().map(move |&p| (t, p)))
        .collect();
    let planar: Vec<(f64, f64)> = tagged.iter().map(|&(t, (u, v))| tiles[t].planar(u, v)).collect();
    let refs: Vec<&Tile> = tiles.iter().collect();
    let e = model.embed_batch(&refs, &tagged)?;
    let g_geo = model.geo_embed(&planar)?;
    let (mut mm, mut geo) = (Vec::new(), Vec::new());
    let mut start = 0;
    for q in queries {
        let rows = |t: &Tensor| t.narrow(0, start, q.len());
        mm.push(multimodal_alignment_loss(&rows(&e.g_sat)?, &rows(&e.g_cov)?, temperature)?);
        geo.push(geo_alignment_loss(&rows(&e.fused)?, &rows(&g_geo)?, temperature)?);
        start += q.len();
    }
    let n = centers.len() as f64;
    Ok(((Tensor::stack(&mm, 0)?.sum_all()? / n)?, (Tensor::stack(&geo, 0)?.sum_all()? / n)?))
}

/// Random tile centers keeping the whole tile inside the stack when it fits.
fn sample_center(stack: &CovariateStack, size: usize, rng: &mut impl Rng) -> (i64, i64) {
    (pick_axis(stack.width(), size, rng), pick_axis(stack.height(), size, rng))
}

fn pick_axis(extent: usize, size: usize, rng: &mut impl Rng) -> i64 {
    let half = size / 2;
    if extent <= size {
        (extent / 2) as i64
    } else {
        rng.random_range(half..=extent - (size - half)) as i64
    }
}

/// Contrastive pretraining in place. Writes `epoch-NNN.ckpt` after each epoch
/// when `checkpoint_dir` is given.
pub fn pretrain(
    model: &MisoModel,
    stack: &CovariateStack,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    meta: &BTreeMap<String, String>,
) -> Result<TrainLog> {
    cfg.validate()?;
    model.context.check_stack(stack)?;
    let mut opt = new_optimizer(model, cfg.pretrain_lr, cfg.weight_decay)?;
    let mut rng = init_rng(cfg.seed, PRETRAIN_STREAM);
    let size = model.config.tile_size();
    let mut log = TrainLog::default();
    let mut step = 0usize;
    for epoch in 0..cfg.pretrain_epochs {
        for _ in 0..cfg.pretrain_steps_per_epoch {
            let centers: Vec<(i64, i64)> = (0..cfg.pretrain_tiles_per_step)
                .map(|_| sample_center(stack, size, &mut rng))
                .collect();
            let queries: Vec<Vec<(f64, f64)>> = centers
                .iter()
                .map(|_| {
                    (0..cfg.locations_per_tile)
                        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let (mm, geo) = contrastive_losses(model, stack, &centers, &queries, cfg.temperature)?;
            let loss = (&mm + &geo)?;
            let (lm, lg) = (scalar(&mm)?, scalar(&geo)?);
            if !(lm.is_finite() && lg.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "pretraining loss at epoch {epoch} step {step}: multimodal={lm} geo={lg}"
                )));
            }
            opt.backward_step(&loss)?;
            log.push(LogRow {
                epoch,
                step,
                loss_multimodal: Some(lm),
                loss_geo: Some(lg),
                loss_task: None,
                lr: cfg.pretrain_lr,
            });
            step += 1;
        }
        log::info!("pretrain epoch {epoch}: mean loss {:.4}", log.epoch_mean(epoch).unwrap_or(f64::NAN));
        if let Some(dir) = checkpoint_dir {
            model.save(&dir.join(format!("epoch-{epoch:03}.ckpt")), step as u64, meta)?;
        }
    }
    Ok(log)
}

/// Mean contrastive loss over fixed tiles, without updating parameters.
pub fn contrastive_probe(model: &MisoModel, stack: &CovariateStack, cfg: &TrainConfig, n_tiles: usize, seed: u64) -> Result<f64> {
    let mut rng = init_rng(seed, PRETRAIN_STREAM + 1);
    let mut total = 0.0;
    for _ in 0..n_tiles {
        let center = sample_center(stack, model.config.tile_size(), &mut rng);
        let queries: Vec<(f64, f64)> = (0..cfg.locations_per_tile)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let (mm, geo) = contrastive_losses(model, stack, &[center], &[queries], cfg.temperature)?;
        total += scalar(&mm)? + scalar(&geo)?;
    }
    Ok(total / n_tiles as f64)
}
