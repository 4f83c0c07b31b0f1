use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::container::{Dtype, RasterData, RasterFile, RasterHeader};
use crate::data::geo::GeoTransform;
use crate::error::{Error, Result};

/// Region id for points that fall outside every region.
pub const UNASSIGNED: i32 = -1;

/// A labelled spatial partition (permafrost zones, land-resource areas, ...)
/// stored as an integer raster plus a name table.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub name: String,
    pub regions: BTreeMap<i32, String>,
    pub width: usize,
    pub height: usize,
    pub transform: GeoTransform,
    pub labels: Vec<i32>,
}

impl RegionPartition {
    pub fn new(
        name: impl Into<String>,
        regions: BTreeMap<i32, String>,
        width: usize,
        height: usize,
        transform: GeoTransform,
        labels: Vec<i32>,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::BandShapeMismatch(format!(
                "partition raster has {} cells, expected {width}x{height}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l != UNASSIGNED && !regions.contains_key(l)) {
            return Err(Error::Format(format!("region id {bad} has no name entry")));
        }
        Ok(RegionPartition {
            name: name.into(),
            regions,
            width,
            height,
            transform,
            labels,
        })
    }

    /// Region id at a planar point, or [`UNASSIGNED`].
    pub fn region_of(&self, x: f64, y: f64) -> i32 {
        let (c, r) = self.transform.containing_pixel(x, y);
        if c < 0 || r < 0 || c as usize >= self.width || r as usize >= self.height {
            return UNASSIGNED;
        }
        self.labels[r as usize * self.width + c as usize]
    }

    pub fn region_name(&self, id: i32) -> Option<&str> {
        self.regions.get(&id).map(String::as_str)
    }

    /// Writes `<prefix>.csv` (`region_id,name`) and `<prefix>.smr` (int32 raster).
    pub fn save(&self, prefix: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
        let csv_path = with_ext(prefix, "csv");
        let mut f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        writeln!(f, "# partition: {}", self.name).map_err(|e| Error::io(&csv_path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["region_id", "name"])?;
        for (id, name) in &self.regions {
            w.write_record([id.to_string(), name.clone()])?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let mut meta = meta.clone();
        meta.insert("partition".into(), self.name.clone());
        RasterFile {
            header: RasterHeader {
                width: self.width,
                height: self.height,
                band_names: vec!["region_id".into()],
                band_groups: None,
                transform: self.transform,
                dtype: Dtype::Int32,
                nodata: UNASSIGNED as f64,
                meta,
            },
            data: RasterData::I32(vec![self.labels.clone()]),
        }
        .write(&with_ext(prefix, "smr"))
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        let csv_path = with_ext(prefix, "csv");
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&csv_path)?;
        let mut regions = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let id: i32 = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format("bad region_id".into()))?;
            regions.insert(id, rec.get(1).unwrap_or("").to_string());
        }
        let raster = RasterFile::read(&with_ext(prefix, "smr"))?;
        let labels = match raster.data {
            RasterData::I32(mut b) if b.len() == 1 => b.remove(0),
            _ => return Err(Error::Format("partition raster must be one int32 band".into())),
        };
        let name = raster.header.meta.get("partition").cloned().unwrap_or_else(|| "regions".into());
        RegionPartition::new(
            name,
            regions,
            raster.header.width,
            raster.header.height,
            raster.header.transform,
            labels,
        )
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_roundtrip() {
        let t = GeoTransform::north_up(0.0, 20.0, 10.0).unwrap();
        let regions: BTreeMap<i32, String> = [(0, "continuous".to_string()), (1, "sporadic".to_string())].into();
        let p = RegionPartition::new("zones", regions, 2, 2, t, vec![0, 1, 1, UNASSIGNED]).unwrap();
        assert_eq!(p.region_of(5.0, 15.0), 0);
        assert_eq!(p.region_of(15.0, 15.0), 1);
        assert_eq!(p.region_of(15.0, 5.0), UNASSIGNED);
        assert_eq!(p.region_of(-1.0, 5.0), UNASSIGNED);
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("zones");
        p.save(&prefix, &BTreeMap::new()).unwrap();
        assert_eq!(RegionPartition::load(&prefix).unwrap(), p);
    }

    #[test]
    fn unknown_ids_rejected() {
        let t = GeoTransform::north_up(0.0, 20.0, 10.0).unwrap();
        assert!(RegionPartition::new("z", BTreeMap::new(), 1, 1, t, vec![3]).is_err());
    }
}
