use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Class probabilities for one observation (`probs[c]` for class `c`; NSP
/// rows are `[absence, presence]`).
#[derive(Debug, Clone, PartialEq)]
pub struct PointPrediction {
    pub index: usize,
    pub probs: Vec<f64>,
}

/// CSV `index,p_0,...,p_{K-1}` with `#` comment lines first.
pub fn write_predictions(path: &Path, preds: &[PointPrediction], comments: &[String]) -> Result<()> {
    let k = preds.first().map_or(0, |p| p.probs.len());
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("index");
    for c in 0..k {
        out.push_str(&format!(",p_{c}"));
    }
    out.push('\n');
    for p in preds {
        if p.probs.len() != k {
            return Err(Error::DimMismatch {
                expected: k,
                actual: p.probs.len(),
            });
        }
        out.push_str(&p.index.to_string());
        for v in &p.probs {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PointPrediction>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("index") || headers.len() < 2 {
        return Err(Error::Format("prediction header must start with `index,p_0`".into()));
    }
    let k = headers.len() - 1;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let index = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad index `{}`", &rec[0])))?;
        let probs = (1..=k)
            .map(|c| {
                rec[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad probability `{}`", &rec[c])))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(PointPrediction { index, probs });
    }
    Ok(out)
}
