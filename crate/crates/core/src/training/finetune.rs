use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::observations::Task;
use crate::data::stack::CovariateStack;
use crate::data::tile::{crop_tile_at_pixel, Tile};
use crate::error::{Error, Result};
use crate::evaluation::predictions::PointPrediction;
use crate::model::layers::init_rng;
use crate::model::miso::MisoModel;
use crate::objectives::{nsp_loss, taxonomy_loss};
use crate::splits::{FoldAssignment, N_FOLDS};
use crate::training::config::TrainConfig;
use crate::training::labels::LabelStore;
use crate::training::log::{LogRow, TrainLog};
use crate::training::predict::predict_points;
use crate::training::schedule::cosine_lr;
use crate::training::{new_optimizer, scalar};

const FINETUNE_STREAM: u64 = 20;

/// Points sharing one lattice cell, in continuous stack-pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGroup {
    /// Pixel the group's tile is centered on.
    pub center: (i64, i64),
    /// Indices into the caller's point list.
    pub members: Vec<usize>,
}

/// Groups points by the lattice cell of side `spacing` pixels containing
/// them. Groups come out in row-major cell order.
pub fn group_points(pixels: &[(f64, f64)], spacing: usize) -> Vec<PointGroup> {
    let s = spacing.max(1);
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, &(c, r)) in pixels.iter().enumerate() {
        let key = ((r / s as f64).floor() as i64, (c / s as f64).floor() as i64);
        cells.entry(key).or_default().push(i);
    }
    cells
        .into_iter()
        .map(|((kr, kc), members)| PointGroup {
            center: (kc * s as i64 + (s / 2) as i64, kr * s as i64 + (s / 2) as i64),
            members,
        })
        .collect()
}

/// Part of a group queried through one jittered tile.
#[derive(Debug, Clone)]
struct TileChunk {
    center: (i64, i64),
    members: Vec<usize>,
}

/// Integer offsets `j` in `[-max_jitter, max_jitter]` such that a tile
/// centered on `center + j` contains every coordinate in `coords`.
fn jitter_range(center: i64, coords: impl Iterator<Item = f64>, size: usize, max_jitter: i64) -> (i64, i64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in coords {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let half = (size / 2) as f64;
    // tile spans [center + j - half, center + j - half + size)
    let j_min = (hi - center as f64 + half - size as f64).floor() as i64 + 1;
    let j_max = (lo - center as f64 + half).floor() as i64;
    (j_min.max(-max_jitter), j_max.min(max_jitter))
}

/// Finetunes a copy of `base` on the labeled points among `train`. A step
/// packs up to `batch_size` points; each lattice group in it brings its own
/// tile, centered near the group with random jitter.
pub fn finetune_on<S: LabelStore + ?Sized>(
    base: &MisoModel,
    stack: &CovariateStack,
    store: &S,
    train: &[usize],
    task: Task,
    cfg: &TrainConfig,
    stream: u64,
) -> Result<(MisoModel, TrainLog)> {
    cfg.validate()?;
    base.context.check_stack(stack)?;
    let mut idx = Vec::with_capacity(train.len());
    let mut labels = Vec::with_capacity(train.len());
    for &i in train {
        if i >= store.len() {
            return Err(Error::OutOfBounds(format!("training index {i} beyond {} points", store.len())));
        }
        if let Some(l) = store.label(i, task) {
            idx.push(i);
            labels.push(l);
        }
    }
    if idx.is_empty() {
        return Err(Error::InsufficientData(format!(
            "empty training fold: none of {} points carries a {} label",
            train.len(),
            task.as_str()
        )));
    }
    let transform = *stack.transform();
    let pixels: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| {
            let (x, y) = store.location(i);
            transform.planar_to_pixel(x, y)
        })
        .collect();
    let size = base.config.tile_size();
    let spacing = ((size as f64 * cfg.group_spacing).round() as usize).max(1);
    let max_jitter = (size as f64 * cfg.jitter).floor() as i64;
    let groups = group_points(&pixels, spacing);
    let mut rng = init_rng(cfg.seed, FINETUNE_STREAM + stream);
    // every epoch's plan is drawn up front so the schedule length is known
    let mut plans: Vec<Vec<Vec<TileChunk>>> = Vec::with_capacity(cfg.finetune_epochs);
    for _ in 0..cfg.finetune_epochs {
        let mut chunks = Vec::new();
        for group in &groups {
            let mut members = group.members.clone();
            members.shuffle(&mut rng);
            for part in members.chunks(cfg.batch_size) {
                let (lo, hi) = jitter_range(group.center.0, part.iter().map(|&k| pixels[k].0), size, max_jitter);
                let jc = if lo <= hi { rng.random_range(lo..=hi) } else { 0 };
                let (lo, hi) = jitter_range(group.center.1, part.iter().map(|&k| pixels[k].1), size, max_jitter);
                let jr = if lo <= hi { rng.random_range(lo..=hi) } else { 0 };
                chunks.push(TileChunk {
                    center: (group.center.0 + jc, group.center.1 + jr),
                    members: part.to_vec(),
                });
            }
        }
        chunks.shuffle(&mut rng);
        let mut steps: Vec<Vec<TileChunk>> = Vec::new();
        let mut filled = 0;
        for c in chunks {
            if steps.is_empty() || filled + c.members.len() > cfg.batch_size {
                steps.push(Vec::new());
                filled = 0;
            }
            filled += c.members.len();
            steps.last_mut().expect("step opened above").push(c);
        }
        plans.push(steps);
    }
    let total: usize = plans.iter().map(Vec::len).sum();
    let warmup = ((total as f64) * cfg.warmup_fraction).round() as usize;

    let model = base.duplicate()?;
    let mut opt = new_optimizer(&model, cfg.warmup_lr, cfg.weight_decay)?;
    let mut log = TrainLog::default();
    let mut step = 0usize;
    for (epoch, steps) in plans.into_iter().enumerate() {
        for chunks in steps {
            let tiles = chunks
                .iter()
                .map(|c| crop_tile_at_pixel(stack, c.center.0, c.center.1, size))
                .collect::<Result<Vec<_>>>()?;
            let mut queries = Vec::new();
            let mut y = Vec::new();
            for (t, c) in chunks.iter().enumerate() {
                for &k in &c.members {
                    let (px, py) = store.location(idx[k]);
                    queries.push((t, tiles[t].normalized(px, py)));
                    y.push(labels[k]);
                }
            }
            let tile_refs: Vec<&Tile> = tiles.iter().collect();
            let e = model.embed_batch(&tile_refs, &queries)?;
            let logits = model.logits(&e.fused, task)?;
            let loss = match task {
                Task::Nsp => nsp_loss(&logits, &y)?,
                Task::Taxonomy => taxonomy_loss(&logits, &y)?,
            };
            let lt = scalar(&loss)?;
            if !lt.is_finite() {
                return Err(Error::NonFinite(format!("finetuning loss at epoch {epoch} step {step}")));
            }
            let lr = cosine_lr(step, total, warmup, cfg.warmup_lr, cfg.max_lr)?;
            opt.set_learning_rate(lr);
            opt.backward_step(&loss)?;
            log.push(LogRow {
                epoch,
                step,
                loss_multimodal: None,
                loss_geo: None,
                loss_task: Some(lt),
                lr,
            });
            step += 1;
        }
        log::info!(
            "finetune epoch {epoch}: mean task loss {:.4}",
            log.epoch_mean(epoch).unwrap_or(f64::NAN)
        );
    }
    Ok((model, log))
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub model: MisoModel,
    pub log: TrainLog,
    /// Held-out predictions, indexed into the observation list.
    pub predictions: Vec<PointPrediction>,
}

/// Trains on every fold except `fold` and predicts the held-out points.
/// Held-out labels are never read.
pub fn finetune_fold<S: LabelStore + ?Sized>(
    base: &MisoModel,
    stack: &CovariateStack,
    store: &S,
    folds: &FoldAssignment,
    fold: usize,
    task: Task,
    cfg: &TrainConfig,
) -> Result<FoldOutcome> {
    if folds.len() != store.len() {
        return Err(Error::DimMismatch {
            expected: store.len(),
            actual: folds.len(),
        });
    }
    if fold >= N_FOLDS {
        return Err(Error::InvalidArgument(format!("fold {fold} out of range")));
    }
    let (model, log) = finetune_on(base, stack, store, &folds.training(fold), task, cfg, fold as u64)?;
    let held = folds.held_out(fold);
    let points: Vec<(f64, f64)> = held.iter().map(|&i| store.location(i)).collect();
    let probs = predict_points(&model, stack, &points, task)?;
    let predictions = held
        .into_iter()
        .zip(probs)
        .map(|(index, probs)| PointPrediction { index, probs })
        .collect();
    Ok(FoldOutcome {
        fold,
        model,
        log,
        predictions,
    })
}

/// All five folds in order.
pub fn finetune<S: LabelStore + ?Sized>(
    base: &MisoModel,
    stack: &CovariateStack,
    store: &S,
    folds: &FoldAssignment,
    task: Task,
    cfg: &TrainConfig,
) -> Result<Vec<FoldOutcome>> {
    (0..N_FOLDS)
        .map(|f| finetune_fold(base, stack, store, folds, f, task, cfg))
        .collect()
}
