use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "epoch,step,loss_multimodal,loss_geo,loss_task,lr";

/// One optimizer step. Loss terms not used by a phase are `None` and written
/// as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub loss_multimodal: Option<f64>,
    pub loss_geo: Option<f64>,
    pub loss_task: Option<f64>,
    pub lr: f64,
}

impl LogRow {
    pub fn total(&self) -> f64 {
        [self.loss_multimodal, self.loss_geo, self.loss_task].iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    /// Mean total loss of one epoch.
    pub fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.epoch == epoch).map(LogRow::total).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(LOG_HEADER);
        out.push('\n');
        let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                r.step,
                f(r.loss_multimodal),
                f(r.loss_geo),
                f(r.loss_task),
                r.lr
            ));
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = TrainLog::default();
        log.push(LogRow {
            epoch: 0,
            step: 0,
            loss_multimodal: Some(1.5),
            loss_geo: Some(0.5),
            loss_task: None,
            lr: 1e-3,
        });
        log.push(LogRow {
            epoch: 0,
            step: 1,
            loss_multimodal: Some(1.0),
            loss_geo: Some(0.0),
            loss_task: None,
            lr: 1e-3,
        });
        assert_eq!(log.epoch_mean(0), Some(1.5));
        assert_eq!(log.epoch_mean(1), None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        log.write_csv(&p, &["seed=1".into()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "# seed=1\nepoch,step,loss_multimodal,loss_geo,loss_task,lr\n0,0,1.5,0.5,,0.001\n0,1,1,0,,0.001\n"
        );
    }
}
