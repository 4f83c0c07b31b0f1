use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × K` counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn from_predictions(preds: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::DimMismatch {
                expected: labels.len(),
                actual: preds.len(),
            });
        }
        if preds.is_empty() {
            return Err(Error::InsufficientData("metrics need at least one prediction".into()));
        }
        let mut m = ConfusionMatrix::new(k);
        for (&p, &t) in preds.iter().zip(labels) {
            if p >= k || t >= k {
                return Err(Error::Label(format!("class index out of range for K={k}: pred {p}, label {t}")));
            }
            m.counts[t * k + p] += 1;
        }
        Ok(m)
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.k).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, class)).sum()
    }

    /// Overall accuracy in percent.
    pub fn accuracy(&self) -> f64 {
        pct(self.trace(), self.total()).unwrap_or(0.0)
    }

    /// `None` when the class was never predicted.
    pub fn precision(&self, class: usize) -> Option<f64> {
        pct(self.get(class, class), self.predicted(class))
    }

    /// `None` when the class has no true instances.
    pub fn recall(&self, class: usize) -> Option<f64> {
        pct(self.get(class, class), self.support(class))
    }
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Binary task metrics in percent; undefined ratios are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision_0: Option<f64>,
    pub recall_0: Option<f64>,
    pub precision_1: Option<f64>,
    pub recall_1: Option<f64>,
    pub accuracy: f64,
}

pub fn binary_metrics(preds: &[usize], labels: &[usize]) -> Result<BinaryMetrics> {
    let m = ConfusionMatrix::from_predictions(preds, labels, 2)?;
    Ok(BinaryMetrics {
        precision_0: m.precision(0),
        recall_0: m.recall(0),
        precision_1: m.precision(1),
        recall_1: m.recall(1),
        accuracy: m.accuracy(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Support-weighted averages in percent.
///
/// A class that is never predicted contributes precision 0 and F1 0.
/// Weighted F1 is the support-weighted mean of per-class F1. Weighted recall
/// is `ΣTP / N`, which is the overall accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

pub fn weighted_multiclass_metrics(preds: &[usize], labels: &[usize], k: usize) -> Result<WeightedMetrics> {
    let m = ConfusionMatrix::from_predictions(preds, labels, k)?;
    Ok(weighted_from_confusion(&m))
}

pub fn weighted_from_confusion(m: &ConfusionMatrix) -> WeightedMetrics {
    let n = m.total() as f64;
    let mut per_class = Vec::with_capacity(m.k);
    let (mut wp, mut wf) = (0.0, 0.0);
    for c in 0..m.k {
        let support = m.support(c);
        let p = m.precision(c);
        let r = m.recall(c);
        let f1 = match (p, r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (_, Some(_)) => Some(0.0),
            _ => None,
        };
        let w = support as f64 / n;
        wp += w * p.unwrap_or(0.0);
        wf += w * f1.unwrap_or(0.0);
        per_class.push(ClassMetrics {
            support,
            precision: p,
            recall: r,
            f1,
        });
    }
    let accuracy = m.accuracy();
    WeightedMetrics {
        precision: wp,
        recall: accuracy,
        f1: wf,
        accuracy,
        per_class,
    }
}

/// Hard label from a probability row: index of the maximum (first on ties);
/// for a single presence probability, `p >= threshold`.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn threshold_label(p: f64, threshold: f64) -> usize {
    usize::from(p >= threshold)
}

/// Mean of per-fold values; `None` if any fold is undefined.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for v in values {
        s += (*v)?;
    }
    Some(s / values.len() as f64)
}
