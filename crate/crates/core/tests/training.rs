//! Pretraining and finetuning behavior on small synthetic worlds.

use std::collections::BTreeMap;

use candle_core::DType;

use soilmap::data::{generate_synthetic_world, CovariateStack, SynthConfig, SynthWorld, Task};
use soilmap::model::{EncoderConfig, MisoModel, ModelConfig, ModelContext};
use soilmap::splits::{make_split, SplitScheme};
use soilmap::training::{
    contrastive_probe, finetune_fold, finetune_on, predict_points, pretrain, translation_probe, AccessLog, TrainConfig,
    TRANSLATION_TOLERANCE,
};

fn world(seed: u64) -> SynthWorld {
    generate_synthetic_world(&SynthConfig {
        width: 160,
        height: 120,
        n_points: 200,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn tiny(stack: &CovariateStack, seed: u64) -> MisoModel {
    let ctx = ModelContext::from_stack(stack);
    let enc = |in_channels| EncoderConfig {
        in_channels,
        base_dim: 8,
        window: 2,
        depths: [1, 1, 1, 1],
        heads: [1, 1, 2, 2],
        tile_size: 32,
        mlp_ratio: 2,
        ..ModelConfig::desk(1, 1).satellite
    };
    let mc = ModelConfig {
        satellite: enc(ctx.satellite_bands.len()),
        covariate: enc(ctx.covariate_bands.len()),
        embed_dim: 32,
        seed,
        ..ModelConfig::desk(1, 1)
    };
    MisoModel::new(&mc, &ctx, DType::F32).unwrap()
}

fn desk(stack: &CovariateStack) -> MisoModel {
    let ctx = ModelContext::from_stack(stack);
    MisoModel::new(
        &ModelConfig::desk(ctx.satellite_bands.len(), ctx.covariate_bands.len()),
        &ctx,
        DType::F32,
    )
    .unwrap()
}

fn one_epoch(seed: u64) -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 1,
        seed,
        ..TrainConfig::desk()
    }
}

#[test]
fn first_pretraining_epoch_lowers_the_loss_for_most_seeds() {
    let w = world(1);
    let mut improved = 0;
    for seed in 0..10 {
        let model = tiny(&w.stack, seed);
        let cfg = one_epoch(seed);
        let before = contrastive_probe(&model, &w.stack, &cfg, 8, 99).unwrap();
        pretrain(&model, &w.stack, &cfg, None, &BTreeMap::new()).unwrap();
        let after = contrastive_probe(&model, &w.stack, &cfg, 8, 99).unwrap();
        println!("seed {seed}: probe loss {before:.4} -> {after:.4}");
        improved += usize::from(after < before);
    }
    assert!(improved >= 9, "{improved}/10 seeds improved");
}

#[test]
fn two_desk_epochs_end_below_the_initial_loss() {
    let w = world(2);
    let model = desk(&w.stack);
    let cfg = TrainConfig {
        pretrain_epochs: 2,
        ..TrainConfig::desk()
    };
    let log = pretrain(&model, &w.stack, &cfg, None, &BTreeMap::new()).unwrap();
    let initial = log.rows[0].total();
    let last = log.epoch_mean(1).unwrap();
    assert!(last < initial, "epoch-2 mean {last} vs initial {initial}");
}

#[test]
fn single_location_per_tile_is_rejected() {
    let w = world(3);
    let cfg = TrainConfig {
        locations_per_tile: 1,
        ..one_epoch(0)
    };
    assert!(pretrain(&tiny(&w.stack, 0), &w.stack, &cfg, None, &BTreeMap::new()).is_err());
}

#[test]
fn fixed_seed_repeats_the_first_epoch_loss() {
    let w = world(4);
    let cfg = TrainConfig {
        pretrain_steps_per_epoch: 5,
        ..one_epoch(7)
    };
    let run = || {
        let model = tiny(&w.stack, 7);
        pretrain(&model, &w.stack, &cfg, None, &BTreeMap::new())
            .unwrap()
            .epoch_mean(0)
            .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn finetuning_never_reads_held_out_labels() {
    let w = world(5);
    let pts: Vec<(f64, f64)> = w.observations.iter().map(|o| (o.x, o.y)).collect();
    let folds = make_split(&pts, SplitScheme::SH_1KM, 0).unwrap();
    let store = AccessLog::new(w.observations.as_slice());
    let cfg = TrainConfig {
        finetune_epochs: 1,
        ..TrainConfig::desk()
    };
    let out = finetune_fold(&tiny(&w.stack, 0), &w.stack, &store, &folds, 2, Task::Nsp, &cfg).unwrap();
    let held: Vec<usize> = folds.held_out(2);
    assert!(!held.is_empty());
    let reads = store.reads();
    assert!(held.iter().all(|i| !reads.contains(i)));
    assert!(!reads.is_empty());
    assert_eq!(out.predictions.len(), held.len());
}

fn accuracy(model: &MisoModel, w: &SynthWorld, idx: &[usize]) -> f64 {
    let idx: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| w.observations[i].label(Task::Nsp).is_some())
        .collect();
    let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (w.observations[i].x, w.observations[i].y)).collect();
    let probs = predict_points(model, &w.stack, &pts, Task::Nsp).unwrap();
    let hits = idx
        .iter()
        .zip(&probs)
        .filter(|(&i, p)| usize::from(p[1] >= 0.5) == w.observations[i].label(Task::Nsp).unwrap())
        .count();
    100.0 * hits as f64 / idx.len() as f64
}

#[test]
fn training_fold_accuracy_is_at_least_held_out_accuracy() {
    let w = world(6);
    let pts: Vec<(f64, f64)> = w.observations.iter().map(|o| (o.x, o.y)).collect();
    let folds = make_split(&pts, SplitScheme::Random, 0).unwrap();
    let cfg = TrainConfig {
        finetune_epochs: 4,
        ..TrainConfig::desk()
    };
    let train = folds.training(0);
    let (model, _) = finetune_on(&desk(&w.stack), &w.stack, w.observations.as_slice(), &train, Task::Nsp, &cfg, 0).unwrap();
    let (fit, held) = (accuracy(&model, &w, &train), accuracy(&model, &w, &folds.held_out(0)));
    println!("training-fold accuracy {fit:.1}%, held-out {held:.1}%");
    assert!(fit >= held);
}

#[test]
fn taxonomy_head_emits_seven_way_simplexes() {
    let w = world(7);
    let cfg = TrainConfig {
        finetune_epochs: 1,
        ..TrainConfig::desk()
    };
    let all: Vec<usize> = (0..w.observations.len()).collect();
    let (model, _) = finetune_on(
        &tiny(&w.stack, 0),
        &w.stack,
        w.observations.as_slice(),
        &all,
        Task::Taxonomy,
        &cfg,
        0,
    )
    .unwrap();
    let pts: Vec<(f64, f64)> = w.observations.iter().map(|o| (o.x, o.y)).collect();
    for p in predict_points(&model, &w.stack, &pts, Task::Taxonomy).unwrap() {
        assert_eq!(p.len(), 7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn shifted_tiles_stay_within_the_translation_tolerance() {
    let w = world(8);
    let model = desk(&w.stack);
    let b = w.stack.bounds();
    let centre = ((b.min_x + b.max_x) / 2.0, (b.min_y + b.max_y) / 2.0);
    let mut worst = 0.0f64;
    for shift in [(8, 0), (0, -8), (12, 12)] {
        worst = worst.max(translation_probe(&model, &w.stack, centre, shift, Task::Nsp).unwrap());
    }
    println!("translation probe max diff {worst:.4} (tolerance {TRANSLATION_TOLERANCE})");
    assert!(worst < TRANSLATION_TOLERANCE);
}
