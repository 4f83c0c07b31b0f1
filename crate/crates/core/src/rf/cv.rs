use crate::data::observations::Task;
use crate::data::stack::CovariateStack;
use crate::error::{Error, Result};
use crate::evaluation::predictions::PointPrediction;
use crate::rf::features::extract_features;
use crate::rf::forest::{train_rf, Forest, RFConfig};
use crate::rf::search::{random_search, SearchResult, SearchSpace};
use crate::splits::{FoldAssignment, N_FOLDS};
use crate::training::labels::LabelStore;

/// Optional per-fold hyperparameter search on the training fold only.
#[derive(Debug, Clone)]
pub struct FoldSearch {
    pub space: SearchSpace,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RfFold {
    pub fold: usize,
    pub forest: Forest,
    pub search: Option<SearchResult>,
    /// Held-out predictions, indexed into the observation list.
    pub predictions: Vec<PointPrediction>,
}

/// Trains on the labeled points of every fold except `fold` and predicts all
/// held-out points. Held-out labels are never read.
pub fn rf_fold<S: LabelStore + ?Sized>(
    stack: &CovariateStack,
    store: &S,
    folds: &FoldAssignment,
    fold: usize,
    task: Task,
    cfg: &RFConfig,
    search: Option<&FoldSearch>,
) -> Result<RfFold> {
    cfg.validate()?;
    if folds.len() != store.len() {
        return Err(Error::DimMismatch {
            expected: store.len(),
            actual: folds.len(),
        });
    }
    if fold >= N_FOLDS {
        return Err(Error::InvalidArgument(format!("fold {fold} out of range")));
    }
    let features = |i: usize| extract_features(stack, store.location(i), cfg.buffer_d, cfg.include_xy);
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for i in folds.training(fold) {
        if let Some(l) = store.label(i, task) {
            rows.push(features(i)?);
            labels.push(l);
        }
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("empty training fold {fold} for {}", task.as_str())));
    }
    let k = task.num_classes();
    let (chosen, search) = match search {
        Some(s) => {
            let r = random_search(&rows, &labels, k, cfg, &s.space, s.iterations, cfg.seed.wrapping_add(fold as u64))?;
            (r.best.clone(), Some(r))
        }
        None => (cfg.clone(), None),
    };
    let forest = train_rf(&rows, &labels, k, &chosen)?;
    let predictions = folds
        .held_out(fold)
        .into_iter()
        .map(|index| {
            Ok(PointPrediction {
                index,
                probs: forest.predict_proba_row(&features(index)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RfFold {
        fold,
        forest,
        search,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic_world, SynthConfig};
    use crate::splits::random_split;
    use crate::training::labels::AccessLog;

    #[test]
    fn held_out_labels_stay_unread() {
        let world = generate_synthetic_world(&SynthConfig {
            width: 64,
            height: 64,
            n_points: 80,
            ..SynthConfig::default()
        })
        .unwrap();
        let pts: Vec<(f64, f64)> = world.observations.iter().map(|o| (o.x, o.y)).collect();
        let folds = random_split(&pts, 3).unwrap();
        let store = AccessLog::new(world.observations.as_slice());
        let cfg = RFConfig {
            n_trees: 5,
            ..RFConfig::default()
        };
        let out = rf_fold(&world.stack, &store, &folds, 2, Task::Nsp, &cfg, None).unwrap();
        assert!(store.reads().iter().all(|&i| folds.fold_of[i] != 2));
        assert_eq!(out.predictions.len(), folds.held_out(2).len());
        assert!(out.predictions.iter().all(|p| (p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }
}
