use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::observations::{SoilOrder, Task};
use crate::error::{Error, Result};
use crate::evaluation::histogram::probability_histogram;
use crate::evaluation::metrics::{
    argmax, binary_metrics, mean_defined, threshold_label, weighted_from_confusion, BinaryMetrics, ConfusionMatrix, WeightedMetrics,
};
use crate::evaluation::plot::grouped_bar_svg;
use crate::evaluation::predictions::PointPrediction;
use crate::evaluation::regional::{per_region_class_accuracy, zone_presence_percentage, RegionClassAccuracy, ZoneTable};
use crate::splits::{FoldAssignment, N_FOLDS};

pub const REPORT_FORMAT: &str = "soilmap-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_points: usize,
    pub confusion: ConfusionMatrix,
    pub binary: Option<BinaryMetrics>,
    pub weighted: Option<WeightedMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub folds: Vec<FoldReport>,
    /// Arithmetic mean over folds; `None` when any fold is undefined.
    pub mean: BTreeMap<String, Option<f64>>,
    /// Presence probability (NSP) or top-class probability (taxonomy).
    pub histogram: Vec<f64>,
    pub zones: Option<ZoneTable>,
    pub regional: Option<Vec<RegionClassAccuracy>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub scheme: String,
    pub task: Task,
    pub threshold: f64,
    pub class_names: Vec<String>,
    pub provenance: BTreeMap<String, String>,
    /// Observed presence percentage per zone.
    pub zones_truth: Option<ZoneTable>,
    pub models: Vec<ModelReport>,
}

/// Inputs shared by every model under evaluation.
pub struct EvalContext<'a> {
    pub task: Task,
    /// Label per observation index.
    pub labels: &'a [Option<usize>],
    pub folds: &'a FoldAssignment,
    /// Region id per observation index and the region name table.
    pub regions: Option<(&'a [i32], &'a BTreeMap<i32, String>)>,
    pub excluded_zones: &'a [String],
    pub threshold: f64,
    pub n_bins: usize,
}

pub fn class_names(task: Task) -> Vec<String> {
    match task {
        Task::Nsp => vec!["absence".into(), "presence".into()],
        Task::Taxonomy => SoilOrder::ALL.iter().map(|o| o.name().to_string()).collect(),
    }
}

impl EvalContext<'_> {
    fn hard_label(&self, probs: &[f64]) -> usize {
        match self.task {
            Task::Nsp => threshold_label(probs[1], self.threshold),
            Task::Taxonomy => argmax(probs),
        }
    }

    /// Observed presence per zone over all labelled points.
    pub fn zones_truth(&self) -> Option<ZoneTable> {
        let (regions, names) = self.regions?;
        if self.task != Task::Nsp {
            return None;
        }
        let (r, v): (Vec<i32>, Vec<f64>) = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (regions[i], l as f64)))
            .unzip();
        Some(zone_presence_percentage(&r, &v, names, 0.5, self.excluded_zones))
    }

    /// Scores held-out predictions fold by fold. Row order of `preds` is
    /// irrelevant; duplicate indices are rejected.
    pub fn evaluate_model(&self, model: &str, preds: &[PointPrediction]) -> Result<ModelReport> {
        let k = self.task.num_classes();
        let mut by_index: BTreeMap<usize, &PointPrediction> = BTreeMap::new();
        for p in preds {
            if p.probs.len() != k {
                return Err(Error::DimMismatch {
                    expected: k,
                    actual: p.probs.len(),
                });
            }
            if p.index >= self.labels.len() {
                return Err(Error::OutOfBounds(format!("prediction index {} beyond observations", p.index)));
            }
            if by_index.insert(p.index, p).is_some() {
                return Err(Error::Format(format!("duplicate prediction for index {}", p.index)));
            }
        }
        let mut folds = Vec::with_capacity(N_FOLDS);
        let mut all_hard = Vec::new();
        let mut all_truth = Vec::new();
        let mut all_regions = Vec::new();
        let mut hist_values = Vec::new();
        let mut zone_values = Vec::new();
        for fold in 0..N_FOLDS {
            let mut hard = Vec::new();
            let mut truth = Vec::new();
            for (&i, p) in &by_index {
                if self.folds.fold_of[i] != fold {
                    continue;
                }
                let Some(label) = self.labels[i] else { continue };
                let h = self.hard_label(&p.probs);
                hard.push(h);
                truth.push(label);
                hist_values.push(match self.task {
                    Task::Nsp => p.probs[1],
                    Task::Taxonomy => p.probs[h],
                });
                zone_values.push(p.probs[k - 1]);
                if let Some((regions, _)) = self.regions {
                    all_regions.push(regions[i]);
                }
            }
            if hard.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "model `{model}` has no held-out predictions in fold {fold}"
                )));
            }
            let confusion = ConfusionMatrix::from_predictions(&hard, &truth, k)?;
            let (binary, weighted) = match self.task {
                Task::Nsp => (Some(binary_metrics(&hard, &truth)?), None),
                Task::Taxonomy => (None, Some(weighted_from_confusion(&confusion))),
            };
            folds.push(FoldReport {
                fold,
                n_points: hard.len(),
                confusion,
                binary,
                weighted,
            });
            all_hard.extend(hard);
            all_truth.extend(truth);
        }
        let mean = mean_metrics(&folds);
        let histogram = probability_histogram(&hist_values.iter().map(|p| p.clamp(0.0, 1.0)).collect::<Vec<_>>(), self.n_bins)?;
        let (zones, regional) = match self.regions {
            Some((_, names)) => (
                (self.task == Task::Nsp)
                    .then(|| zone_presence_percentage(&all_regions, &zone_values, names, self.threshold, self.excluded_zones)),
                Some(per_region_class_accuracy(&all_regions, &all_hard, &all_truth, names, k)),
            ),
            None => (None, None),
        };
        Ok(ModelReport {
            model: model.to_string(),
            folds,
            mean,
            histogram,
            zones,
            regional,
        })
    }
}

fn mean_metrics(folds: &[FoldReport]) -> BTreeMap<String, Option<f64>> {
    let mut m = BTreeMap::new();
    let col = |f: &dyn Fn(&FoldReport) -> Option<f64>| mean_defined(&folds.iter().map(f).collect::<Vec<_>>());
    m.insert("accuracy".into(), col(&|f| Some(f.confusion.accuracy())));
    if folds.iter().all(|f| f.binary.is_some()) {
        m.insert("precision_0".into(), col(&|f| f.binary.as_ref()?.precision_0));
        m.insert("recall_0".into(), col(&|f| f.binary.as_ref()?.recall_0));
        m.insert("precision_1".into(), col(&|f| f.binary.as_ref()?.precision_1));
        m.insert("recall_1".into(), col(&|f| f.binary.as_ref()?.recall_1));
    }
    if folds.iter().all(|f| f.weighted.is_some()) {
        m.insert("weighted_precision".into(), col(&|f| Some(f.weighted.as_ref()?.precision)));
        m.insert("weighted_recall".into(), col(&|f| Some(f.weighted.as_ref()?.recall)));
        m.insert("weighted_f1".into(), col(&|f| Some(f.weighted.as_ref()?.f1)));
    }
    m
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: MetricsReport = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT {
            return Err(Error::Format(format!("unsupported report format `{}`", r.format)));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Svg,
}

/// Writes `report.json` and/or SVG charts into `dir`; returns written paths.
pub fn emit_report(report: &MetricsReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    if formats.contains(&ReportFormat::Json) {
        put("report.json", report.to_json()?)?;
    }
    if formats.contains(&ReportFormat::Svg) {
        let n_bins = report.models.first().map_or(0, |m| m.histogram.len());
        let bins: Vec<String> = (0..n_bins).map(|b| format!("{:.1}", b as f64 / n_bins as f64)).collect();
        let hist: Vec<(String, Vec<Option<f64>>)> = report
            .models
            .iter()
            .map(|m| (m.model.clone(), m.histogram.iter().map(|v| Some(*v)).collect()))
            .collect();
        let top = hist.iter().flat_map(|(_, v)| v.iter().flatten()).fold(0.0f64, |a, b| a.max(*b));
        put(
            "histogram.svg",
            grouped_bar_svg(
                &format!("{} probability distribution ({})", report.task.as_str(), report.scheme),
                "normalized count",
                &bins,
                &hist,
                (top * 10.0).ceil() / 10.0,
            ),
        )?;
        let metric_keys: Vec<String> = report.models.first().map(|m| m.mean.keys().cloned().collect()).unwrap_or_default();
        let metrics: Vec<(String, Vec<Option<f64>>)> = report
            .models
            .iter()
            .map(|m| {
                (
                    m.model.clone(),
                    metric_keys.iter().map(|k| m.mean.get(k).copied().flatten()).collect(),
                )
            })
            .collect();
        put(
            "metrics.svg",
            grouped_bar_svg(
                &format!("{} mean metrics ({})", report.task.as_str(), report.scheme),
                "percent",
                &metric_keys,
                &metrics,
                100.0,
            ),
        )?;
        if let Some(truth) = &report.zones_truth {
            let cats: Vec<String> = truth.rows.iter().map(|r| r.name.clone()).collect();
            let mut series = vec![(
                "observed".to_string(),
                truth.rows.iter().map(|r| r.presence_pct).collect::<Vec<_>>(),
            )];
            for m in &report.models {
                if let Some(z) = &m.zones {
                    series.push((m.model.clone(), z.rows.iter().map(|r| r.presence_pct).collect()));
                }
            }
            put(
                "zones.svg",
                grouped_bar_svg("presence percentage by zone", "percent", &cats, &series, 100.0),
            )?;
        }
    }
    Ok(written)
}
