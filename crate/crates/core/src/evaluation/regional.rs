use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::partition::{RegionPartition, UNASSIGNED};

/// Classes with fewer points than this in a region are flagged.
pub const MIN_CLASS_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePresence {
    pub region_id: i32,
    pub name: String,
    pub n_points: usize,
    /// `100 · presence / points`; `None` for regions without points.
    pub presence_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTable {
    pub threshold: f64,
    pub rows: Vec<ZonePresence>,
    pub unassigned_points: usize,
}

/// Presence percentage per region. `values` are probabilities or 0/1 labels;
/// a point counts as presence when its value is `>= threshold`. Regions whose
/// name is in `excluded` are omitted.
pub fn zone_presence_percentage(
    regions: &[i32],
    values: &[f64],
    names: &BTreeMap<i32, String>,
    threshold: f64,
    excluded: &[String],
) -> ZoneTable {
    let mut counts: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    let mut unassigned = 0;
    for (&r, &v) in regions.iter().zip(values) {
        if r == UNASSIGNED {
            unassigned += 1;
            continue;
        }
        let e = counts.entry(r).or_default();
        e.0 += 1;
        e.1 += usize::from(v >= threshold);
    }
    let rows = names
        .iter()
        .filter(|(_, name)| !excluded.iter().any(|x| x.eq_ignore_ascii_case(name)))
        .map(|(&id, name)| {
            let (n, p) = counts.get(&id).copied().unwrap_or((0, 0));
            ZonePresence {
                region_id: id,
                name: name.clone(),
                n_points: n,
                presence_pct: (n > 0).then(|| 100.0 * p as f64 / n as f64),
            }
        })
        .collect();
    ZoneTable {
        threshold,
        rows,
        unassigned_points: unassigned,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionClassAccuracy {
    pub region_id: i32,
    pub name: String,
    pub class: usize,
    pub n_points: usize,
    /// Percent of this class's points in the region predicted correctly.
    pub accuracy: Option<f64>,
    /// Fewer than [`MIN_CLASS_POINTS`] points.
    pub flagged: bool,
}

/// Accuracy per (region, true class), one row per region and class.
pub fn per_region_class_accuracy(
    regions: &[i32],
    preds: &[usize],
    labels: &[usize],
    names: &BTreeMap<i32, String>,
    k: usize,
) -> Vec<RegionClassAccuracy> {
    let mut counts: BTreeMap<(i32, usize), (usize, usize)> = BTreeMap::new();
    for ((&r, &p), &t) in regions.iter().zip(preds).zip(labels) {
        if r == UNASSIGNED || t >= k {
            continue;
        }
        let e = counts.entry((r, t)).or_default();
        e.0 += 1;
        e.1 += usize::from(p == t);
    }
    let mut rows = Vec::new();
    for (&id, name) in names {
        for class in 0..k {
            let (n, ok) = counts.get(&(id, class)).copied().unwrap_or((0, 0));
            rows.push(RegionClassAccuracy {
                region_id: id,
                name: name.clone(),
                class,
                n_points: n,
                accuracy: (n > 0).then(|| 100.0 * ok as f64 / n as f64),
                flagged: n < MIN_CLASS_POINTS,
            });
        }
    }
    rows
}

/// Region id of each point under a partition.
pub fn regions_of(points: &[(f64, f64)], partition: &RegionPartition) -> Vec<i32> {
    points.iter().map(|p| partition.region_of(p.0, p.1)).collect()
}
