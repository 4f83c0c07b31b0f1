//! Metrics, probability and regional analyses, and report emission.

pub mod histogram;
pub mod metrics;
pub mod plot;
pub mod predictions;
pub mod regional;
pub mod report;

pub use histogram::probability_histogram;
pub use metrics::{binary_metrics, weighted_multiclass_metrics, BinaryMetrics, ConfusionMatrix, WeightedMetrics};
pub use predictions::{read_predictions, write_predictions, PointPrediction};
pub use regional::{per_region_class_accuracy, zone_presence_percentage, RegionClassAccuracy, ZoneTable};
pub use report::{emit_report, EvalContext, MetricsReport, ModelReport, ReportFormat, REPORT_FORMAT};
