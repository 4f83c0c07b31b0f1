use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::container::{Dtype, RasterData, RasterFile, RasterHeader};
use crate::data::geo::{BoundingBox, GeoTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandGroup {
    Satellite,
    Covariate,
}

impl BandGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandGroup::Satellite => "satellite",
            BandGroup::Covariate => "covariate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "satellite" => Ok(BandGroup::Satellite),
            "covariate" => Ok(BandGroup::Covariate),
            other => Err(Error::MalformedHeader(format!("unknown band group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandInfo {
    pub name: String,
    pub group: BandGroup,
}

impl BandInfo {
    pub fn new(name: impl Into<String>, group: BandGroup) -> Self {
        BandInfo { name: name.into(), group }
    }
}

/// Per-band statistics over valid (non-nodata, finite) pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Co-registered multi-band raster holding every input channel on one grid.
///
/// Satellite bands and covariate bands (terrain derivatives followed by climate
/// normals) are distinguished by their group tag; encoders select channels by
/// group in band order.
#[derive(Debug, Clone)]
pub struct CovariateStack {
    width: usize,
    height: usize,
    bands: Vec<BandInfo>,
    data: Vec<Vec<f32>>,
    transform: GeoTransform,
    nodata: f32,
    stats: ChannelStats,
    meta: BTreeMap<String, String>,
}

impl PartialEq for CovariateStack {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bands == other.bands
            && self.transform == other.transform
            && self.nodata.to_bits() == other.nodata.to_bits()
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

impl CovariateStack {
    pub fn new(
        width: usize,
        height: usize,
        bands: Vec<BandInfo>,
        data: Vec<Vec<f32>>,
        transform: GeoTransform,
        nodata: f32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("stack must have non-zero size".into()));
        }
        if bands.is_empty() {
            return Err(Error::InvalidArgument("stack needs at least one band".into()));
        }
        if bands.len() != data.len() {
            return Err(Error::BandShapeMismatch(format!(
                "{} band descriptors for {} grids",
                bands.len(),
                data.len()
            )));
        }
        for (b, grid) in data.iter().enumerate() {
            if grid.len() != width * height {
                return Err(Error::BandShapeMismatch(format!(
                    "band `{}` has {} pixels, expected {width}x{height}",
                    bands[b].name,
                    grid.len()
                )));
            }
        }
        transform.validate()?;
        let stats = compute_stats(&data, nodata);
        Ok(CovariateStack {
            width,
            height,
            bands,
            data,
            transform,
            nodata,
            stats,
            meta: BTreeMap::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> &[BandInfo] {
        &self.bands
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, b: usize) -> &[f32] {
        &self.data[b]
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.meta
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.name == name)
    }

    /// Band indices of one group, in stack order.
    pub fn group_indices(&self, group: BandGroup) -> Vec<usize> {
        self.bands
            .iter()
            .enumerate()
            .filter(|(_, b)| b.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    #[inline]
    pub fn get(&self, band: usize, col: usize, row: usize) -> f32 {
        self.data[band][row * self.width + col]
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        !v.is_finite() || v == self.nodata
    }

    /// True when every band holds a valid value at the pixel.
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        let i = row * self.width + col;
        self.data.iter().all(|b| !self.is_nodata(b[i]))
    }

    /// Row-major per-pixel validity mask across all bands.
    pub fn validity_mask(&self) -> Vec<bool> {
        (0..self.width * self.height)
            .map(|i| self.data.iter().all(|b| !self.is_nodata(b[i])))
            .collect()
    }

    /// Value with nodata replaced by the band's valid-pixel mean.
    #[inline]
    pub fn imputed(&self, band: usize, col: usize, row: usize) -> f32 {
        let v = self.get(band, col, row);
        if self.is_nodata(v) {
            self.stats.mean[band] as f32
        } else {
            v
        }
    }

    pub fn bounds(&self) -> BoundingBox {
        let (x0, y0) = self.transform.pixel_to_planar(0.0, 0.0);
        let (x1, y1) = self.transform.pixel_to_planar(self.width as f64, self.height as f64);
        BoundingBox {
            min_x: x0.min(x1),
            min_y: y0.min(y1),
            max_x: x0.max(x1),
            max_y: y0.max(y1),
        }
    }

    /// Pixel containing a planar point, if inside the stack.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (c, r) = self.transform.containing_pixel(x, y);
        if c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height {
            Some((c as usize, r as usize))
        } else {
            None
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = RasterHeader {
            width: self.width,
            height: self.height,
            band_names: self.bands.iter().map(|b| b.name.clone()).collect(),
            band_groups: Some(self.bands.iter().map(|b| b.group.as_str().to_string()).collect()),
            transform: self.transform,
            dtype: Dtype::Float32,
            nodata: self.nodata as f64,
            meta: self.meta.clone(),
        };
        RasterFile {
            header,
            data: RasterData::F32(self.data.clone()),
        }
        .write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = RasterFile::read(path)?;
        Self::from_raster(file)
    }

    pub fn from_raster(file: RasterFile) -> Result<Self> {
        let h = file.header;
        let data = match file.data {
            RasterData::F32(d) => d,
            RasterData::I32(_) => return Err(Error::Format("covariate stacks must be float32".into())),
        };
        let groups = match &h.band_groups {
            Some(g) => g.iter().map(|s| BandGroup::parse(s)).collect::<Result<Vec<_>>>()?,
            None => vec![BandGroup::Covariate; h.band_names.len()],
        };
        let bands = h.band_names.iter().zip(groups).map(|(n, g)| BandInfo::new(n.clone(), g)).collect();
        let mut stack = CovariateStack::new(h.width, h.height, bands, data, h.transform, h.nodata as f32)?;
        stack.meta = h.meta;
        Ok(stack)
    }
}

/// Loads a stack from the container format.
pub fn load_stack(path: &Path) -> Result<CovariateStack> {
    CovariateStack::load(path)
}

fn compute_stats(data: &[Vec<f32>], nodata: f32) -> ChannelStats {
    let mut mean = Vec::with_capacity(data.len());
    let mut std = Vec::with_capacity(data.len());
    for band in data {
        let (mut n, mut s, mut s2) = (0usize, 0f64, 0f64);
        for &v in band {
            if v.is_finite() && v != nodata {
                n += 1;
                s += v as f64;
                s2 += (v as f64) * (v as f64);
            }
        }
        if n == 0 {
            mean.push(0.0);
            std.push(1.0);
        } else {
            let m = s / n as f64;
            let var = (s2 / n as f64 - m * m).max(0.0);
            mean.push(m);
            std.push(if var > 1e-12 { var.sqrt() } else { 1.0 });
        }
    }
    ChannelStats { mean, std }
}
