use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::geo::BoundingBox;
use crate::error::{Error, Result};

/// The seven soil orders of the taxonomy task, in label-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SoilOrder {
    Andisols,
    Entisols,
    Gelisols,
    Histosols,
    Inceptisols,
    Mollisols,
    Spodosols,
}

impl SoilOrder {
    pub const ALL: [SoilOrder; 7] = [
        SoilOrder::Andisols,
        SoilOrder::Entisols,
        SoilOrder::Gelisols,
        SoilOrder::Histosols,
        SoilOrder::Inceptisols,
        SoilOrder::Mollisols,
        SoilOrder::Spodosols,
    ];
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Label(format!("soil order index {i} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SoilOrder::Andisols => "Andisols",
            SoilOrder::Entisols => "Entisols",
            SoilOrder::Gelisols => "Gelisols",
            SoilOrder::Histosols => "Histosols",
            SoilOrder::Inceptisols => "Inceptisols",
            SoilOrder::Mollisols => "Mollisols",
            SoilOrder::Spodosols => "Spodosols",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Label(format!("unknown soil order `{s}`")))
    }
}

impl fmt::Display for SoilOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which supervised target a run trains or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Near-surface permafrost presence/absence.
    Nsp,
    /// Soil order classification.
    Taxonomy,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Nsp => 2,
            Task::Taxonomy => SoilOrder::COUNT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Nsp => "nsp",
            Task::Taxonomy => "taxonomy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nsp" => Ok(Task::Nsp),
            "tax" | "taxonomy" => Ok(Task::Taxonomy),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

/// A georeferenced field observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldObservation {
    pub x: f64,
    pub y: f64,
    /// 0 = absence, 1 = presence.
    pub nsp: Option<u8>,
    pub tax: Option<SoilOrder>,
    /// ISO `YYYY-MM-DD`.
    pub date: String,
    pub source: String,
}

impl FieldObservation {
    pub fn validate(&self, bounds: Option<&BoundingBox>) -> Result<()> {
        if self.nsp.is_none() && self.tax.is_none() {
            return Err(Error::Label("observation carries no label".into()));
        }
        if let Some(l) = self.nsp {
            if l > 1 {
                return Err(Error::Label(format!("nsp label {l} not in {{0,1}}")));
            }
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::NonFinite("observation coordinates".into()));
        }
        if let Some(b) = bounds {
            if !b.contains(self.x, self.y) {
                return Err(Error::OutOfBounds(format!(
                    "observation ({}, {}) outside the study region",
                    self.x, self.y
                )));
            }
        }
        if !is_iso_date(&self.date) {
            return Err(Error::Format(format!("`{}` is not an ISO date", self.date)));
        }
        Ok(())
    }

    /// Class index for a task, if the label is present.
    pub fn label(&self, task: Task) -> Option<usize> {
        match task {
            Task::Nsp => self.nsp.map(usize::from),
            Task::Taxonomy => self.tax.map(SoilOrder::index),
        }
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
    if !(digits(0..4) && digits(5..7) && digits(8..10)) {
        return false;
    }
    let month: u32 = s[5..7].parse().unwrap_or(0);
    let day: u32 = s[8..10].parse().unwrap_or(0);
    (1..=12).contains(&month) && (1..=31).contains(&day)
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    x: f64,
    y: f64,
    nsp: Option<u8>,
    tax: Option<String>,
    date: String,
    source: String,
}

/// Writes observations as CSV (`x,y,nsp,tax,date,source`); empty fields mean
/// the label is absent. `comments` become leading `#` lines.
pub fn write_observations(path: &Path, obs: &[FieldObservation], comments: &[String]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for c in comments {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    for o in obs {
        w.serialize(ObservationRow {
            x: o.x,
            y: o.y,
            nsp: o.nsp,
            tax: o.tax.map(|t| t.name().to_string()),
            date: o.date.clone(),
            source: o.source.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<FieldObservation>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    let expected = ["x", "y", "nsp", "tax", "date", "source"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format(format!("observation header must be `{}`", expected.join(","))));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: ObservationRow = row?;
        let tax = match row.tax.as_deref() {
            None | Some("") => None,
            Some(s) => Some(SoilOrder::parse(s)?),
        };
        let o = FieldObservation {
            x: row.x,
            y: row.y,
            nsp: row.nsp,
            tax,
            date: row.date,
            source: row.source,
        };
        o.validate(None)?;
        out.push(o);
    }
    Ok(out)
}
