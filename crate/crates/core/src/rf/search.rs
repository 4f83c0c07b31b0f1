use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::forest::{train_rf, RFConfig};

/// Inclusive sampling ranges of the random hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub n_trees: (usize, usize),
    pub max_depth: (usize, usize),
    pub min_samples_split: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_trees: (50, 500),
            max_depth: (4, 32),
            min_samples_split: (2, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub oob_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: RFConfig,
    pub trials: Vec<SearchTrial>,
}

/// Random search scored by out-of-bag accuracy; ties keep the earliest trial.
pub fn random_search(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    base: &RFConfig,
    space: &SearchSpace,
    iterations: usize,
    seed: u64,
) -> Result<SearchResult> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("search needs at least one iteration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(iterations);
    let mut best: Option<(f64, RFConfig)> = None;
    for it in 0..iterations {
        let cfg = RFConfig {
            n_trees: rng.random_range(space.n_trees.0..=space.n_trees.1),
            max_depth: rng.random_range(space.max_depth.0..=space.max_depth.1),
            min_samples_split: rng.random_range(space.min_samples_split.0..=space.min_samples_split.1),
            seed: base.seed.wrapping_add(it as u64),
            ..base.clone()
        };
        let forest = train_rf(rows, labels, n_classes, &cfg)?;
        let oob = forest.oob_accuracy.unwrap_or(0.0);
        log::info!(
            "rf search {it}: trees={} depth={} split={} oob={oob:.2}",
            cfg.n_trees,
            cfg.max_depth,
            cfg.min_samples_split
        );
        trials.push(SearchTrial {
            n_trees: cfg.n_trees,
            max_depth: cfg.max_depth,
            min_samples_split: cfg.min_samples_split,
            oob_accuracy: oob,
        });
        if best.as_ref().is_none_or(|b| oob > b.0) {
            best = Some((oob, cfg));
        }
    }
    Ok(SearchResult {
        best: best.map(|b| b.1).expect("at least one trial"),
        trials,
    })
}
