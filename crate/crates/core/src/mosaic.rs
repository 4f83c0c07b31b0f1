//! Region-wide probability rasters from overlapping tiles merged with
//! Gaussian center weighting.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::container::{Dtype, RasterData, RasterFile, RasterHeader};
use crate::data::geo::GeoTransform;
use crate::data::observations::Task;
use crate::data::stack::CovariateStack;
use crate::data::tile::crop_tile_at_pixel;
use crate::error::{Error, Result};
use crate::model::miso::MisoModel;
use crate::rf::{extract_features, Forest};

/// Queries per MiSo forward pass while rasterizing.
const QUERY_CHUNK: usize = 1024;

pub const WEIGHT_BAND: &str = "weight_sum";

/// Pixel window of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRegion {
    pub col: i64,
    pub row: i64,
    pub width: usize,
    pub height: usize,
}

impl PixelRegion {
    pub fn whole(stack: &CovariateStack) -> Self {
        PixelRegion {
            col: 0,
            row: 0,
            width: stack.width(),
            height: stack.height(),
        }
    }
}

/// User-facing mosaic settings; `None` selects the heuristic default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MosaicConfig {
    /// Tile side in stack pixels; defaults to the model's tile.
    pub tile: Option<usize>,
    /// Fractional overlap between neighbouring tiles; default 0.5.
    pub overlap: Option<f64>,
    /// Gaussian σ in stack pixels; default tile / 4.
    pub sigma: Option<f64>,
    /// Output meters per pixel; defaults to the stack's pixel size.
    pub resolution: Option<f64>,
}

pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct MosaicPlan {
    pub tile: usize,
    pub stride: usize,
    pub sigma: f64,
    /// Output meters per pixel.
    pub resolution: f64,
    pub region: PixelRegion,
    /// Top-left stack pixel of every tile.
    pub origins: Vec<(i64, i64)>,
    /// Settings that fell back to heuristic defaults.
    pub defaulted: Vec<&'static str>,
}

impl MosaicPlan {
    pub fn new(stack: &CovariateStack, region: PixelRegion, model_tile: usize, cfg: &MosaicConfig) -> Result<Self> {
        let mut defaulted = Vec::new();
        let tile = cfg.tile.unwrap_or_else(|| {
            defaulted.push("tile");
            model_tile
        });
        let overlap = cfg.overlap.unwrap_or_else(|| {
            defaulted.push("overlap");
            DEFAULT_OVERLAP
        });
        let sigma = cfg.sigma.unwrap_or_else(|| {
            defaulted.push("sigma");
            tile as f64 / 4.0
        });
        let pixel = stack.transform().pixel_w.abs();
        let resolution = cfg.resolution.unwrap_or_else(|| {
            defaulted.push("resolution");
            pixel
        });
        if tile == 0 {
            return Err(Error::InvalidArgument("tile must be positive".into()));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidArgument(format!("overlap must lie in [0, 1), got {overlap}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidArgument(format!("resolution must be positive, got {resolution}")));
        }
        if region.width == 0 || region.height == 0 {
            return Err(Error::InvalidArgument("empty region".into()));
        }
        let stride = ((tile as f64 * (1.0 - overlap)).round() as usize).clamp(1, tile);
        let origins = plan_tiles(&region, tile, stride)?;
        Ok(MosaicPlan {
            tile,
            stride,
            sigma,
            resolution,
            region,
            origins,
            defaulted,
        })
    }
}

fn axis_origins(start: i64, len: usize, tile: usize, stride: usize) -> Vec<i64> {
    if len <= tile {
        return vec![start + len as i64 / 2 - tile as i64 / 2];
    }
    let last = start + (len - tile) as i64;
    let mut out: Vec<i64> = (0..).map(|k| start + (k * stride) as i64).take_while(|&o| o < last).collect();
    out.push(last);
    out
}

/// Tile origins on a regular lattice whose union covers `region`; the last
/// tile on each axis is clamped inward. A region smaller than one tile gets
/// a single centered tile.
pub fn plan_tiles(region: &PixelRegion, tile: usize, stride: usize) -> Result<Vec<(i64, i64)>> {
    if tile == 0 || stride == 0 || stride > tile {
        return Err(Error::InvalidArgument(format!("need 0 < stride <= tile, got {stride} and {tile}")));
    }
    if region.width == 0 || region.height == 0 {
        return Err(Error::InvalidArgument("empty region".into()));
    }
    let cols = axis_origins(region.col, region.width, tile, stride);
    let rows = axis_origins(region.row, region.height, tile, stride);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (c, r))).collect())
}

/// `exp(-(dx² + dy²) / (2σ²))`.
pub fn gaussian_weight(dx: f64, dy: f64, sigma: f64) -> f64 {
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

/// Predictions of one tile on a window of the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePrediction {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major, `None` where the tile does not cover the cell.
    pub probs: Vec<Option<Vec<f64>>>,
    pub weights: Vec<f64>,
}

/// Per-pixel `Σ wᵢ pᵢ / Σ wᵢ`, accumulated in float64. Returns the class
/// bands and the weight-sum band.
pub fn merge(width: usize, height: usize, n_classes: usize, tiles: &[TilePrediction]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = width * height;
    let mut wsum = vec![0.0f64; n];
    for t in tiles {
        if t.col + t.width > width || t.row + t.height > height {
            return Err(Error::OutOfBounds("tile window exceeds the output grid".into()));
        }
        for r in 0..t.height {
            for c in 0..t.width {
                let k = r * t.width + c;
                let Some(p) = &t.probs[k] else { continue };
                if p.len() != n_classes {
                    return Err(Error::DimMismatch {
                        expected: n_classes,
                        actual: p.len(),
                    });
                }
                wsum[(t.row + r) * width + t.col + c] += t.weights[k];
            }
        }
    }
    if let Some(o) = wsum.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::InsufficientData(format!(
            "output pixel ({}, {}) received no tile weight",
            o % width,
            o / width
        )));
    }
    // normalized weights make a lone contributor reproduce its value bit for bit
    let mut acc = vec![vec![0.0f64; n]; n_classes];
    for t in tiles {
        for r in 0..t.height {
            for c in 0..t.width {
                let k = r * t.width + c;
                let Some(p) = &t.probs[k] else { continue };
                let o = (t.row + r) * width + t.col + c;
                let w = t.weights[k] / wsum[o];
                for (band, &v) in acc.iter_mut().zip(p) {
                    band[o] += w * v;
                }
            }
        }
    }
    Ok((acc, wsum))
}

/// Something that predicts class probabilities at planar points given the
/// tile the points fall in.
pub trait RegionPredictor: Sync {
    fn n_classes(&self, task: Task) -> usize {
        task.num_classes()
    }

    fn predict(&self, stack: &CovariateStack, origin: (i64, i64), tile: usize, points: &[(f64, f64)], task: Task) -> Result<Vec<Vec<f64>>>;
}

impl RegionPredictor for MisoModel {
    fn predict(&self, stack: &CovariateStack, origin: (i64, i64), tile: usize, points: &[(f64, f64)], task: Task) -> Result<Vec<Vec<f64>>> {
        if tile != self.config.tile_size() {
            return Err(Error::DimMismatch {
                expected: self.config.tile_size(),
                actual: tile,
            });
        }
        let half = (tile / 2) as i64;
        let t = crop_tile_at_pixel(stack, origin.0 + half, origin.1 + half, tile)?;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(QUERY_CHUNK) {
            let q: Vec<(f64, f64)> = chunk.iter().map(|&(x, y)| t.normalized(x, y)).collect();
            out.extend(self.predict_tile(&t, &q, task)?);
        }
        Ok(out)
    }
}

/// Forest plus the feature settings it was trained with.
pub struct ForestPredictor<'a> {
    pub forest: &'a Forest,
    pub buffer_d: f64,
    pub include_xy: bool,
}

impl RegionPredictor for ForestPredictor<'_> {
    fn n_classes(&self, _task: Task) -> usize {
        self.forest.n_classes
    }

    fn predict(
        &self,
        stack: &CovariateStack,
        _origin: (i64, i64),
        _tile: usize,
        points: &[(f64, f64)],
        task: Task,
    ) -> Result<Vec<Vec<f64>>> {
        if self.forest.n_classes != task.num_classes() {
            return Err(Error::DimMismatch {
                expected: task.num_classes(),
                actual: self.forest.n_classes,
            });
        }
        points
            .iter()
            .map(|&p| {
                self.forest
                    .predict_proba_row(&extract_features(stack, p, self.buffer_d, self.include_xy)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRaster {
    pub task: Task,
    pub width: usize,
    pub height: usize,
    pub transform: GeoTransform,
    /// One band per class (`[absence, presence]` for NSP).
    pub bands: Vec<Vec<f64>>,
    pub weight_sum: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl PredictionRaster {
    pub fn get(&self, class: usize, col: usize, row: usize) -> f64 {
        self.bands[class][row * self.width + col]
    }

    pub fn band_names(&self) -> Vec<String> {
        (0..self.bands.len()).map(|k| format!("p_{k}")).collect()
    }

    /// Writes the raster container: class bands then the weight band.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut names = self.band_names();
        names.push(WEIGHT_BAND.to_string());
        let mut meta = self.meta.clone();
        meta.insert("task".into(), self.task.as_str().into());
        let mut data: Vec<Vec<f32>> = self.bands.iter().map(|b| b.iter().map(|&v| v as f32).collect()).collect();
        data.push(self.weight_sum.iter().map(|&v| v as f32).collect());
        RasterFile {
            header: RasterHeader {
                width: self.width,
                height: self.height,
                band_names: names,
                band_groups: None,
                transform: self.transform,
                dtype: Dtype::Float32,
                nodata: -9999.0,
                meta,
            },
            data: RasterData::F32(data),
        }
        .write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = RasterFile::read(path)?;
        let h = f.header;
        let task = Task::parse(
            h.meta
                .get("task")
                .ok_or_else(|| Error::MalformedHeader("prediction raster lacks a task".into()))?,
        )?;
        let RasterData::F32(mut data) = f.data else {
            return Err(Error::Format("prediction rasters are float32".into()));
        };
        if h.band_names.last().map(String::as_str) != Some(WEIGHT_BAND) {
            return Err(Error::Format("prediction raster lacks a weight band".into()));
        }
        let weight_sum = data.pop().expect("weight band present").into_iter().map(f64::from).collect();
        let mut meta = h.meta;
        meta.remove("task");
        Ok(PredictionRaster {
            task,
            width: h.width,
            height: h.height,
            transform: h.transform,
            bands: data.into_iter().map(|b| b.into_iter().map(f64::from).collect()).collect(),
            weight_sum,
            meta,
        })
    }
}

/// Output grid over the region: cells of `resolution` meters, as many as fit.
pub fn output_grid(stack: &CovariateStack, plan: &MosaicPlan) -> Result<(usize, usize, GeoTransform)> {
    let t = stack.transform();
    let pixel = t.pixel_w.abs();
    let scale = plan.resolution / pixel;
    let w = ((plan.region.width as f64 / scale).floor() as usize).max(1);
    let h = ((plan.region.height as f64 / scale).floor() as usize).max(1);
    let (x0, y0) = t.pixel_to_planar(plan.region.col as f64, plan.region.row as f64);
    let out = GeoTransform::new(x0, y0, plan.resolution * t.pixel_w.signum(), plan.resolution * t.pixel_h.signum())?;
    Ok((w, h, out))
}

/// Rasterizes a region: each tile predicts the output cells whose centers it
/// covers, weighted by distance to the tile center.
pub fn predict_region<P: RegionPredictor + ?Sized>(
    predictor: &P,
    stack: &CovariateStack,
    plan: &MosaicPlan,
    task: Task,
) -> Result<PredictionRaster> {
    let (width, height, out_t) = output_grid(stack, plan)?;
    let st = *stack.transform();
    // output cell (c, r) center in continuous stack-pixel coordinates
    let cell_px = |c: usize, r: usize| -> (f64, f64) {
        let (x, y) = out_t.pixel_to_planar(c as f64 + 0.5, r as f64 + 0.5);
        st.planar_to_pixel(x, y)
    };
    let tiles: Vec<TilePrediction> = plan
        .origins
        .par_iter()
        .map(|&(oc, or)| {
            let size = plan.tile as f64;
            let (cx, cy) = (oc as f64 + size / 2.0, or as f64 + size / 2.0);
            // output cells whose centers fall inside [o, o + tile)
            let inside = |c: usize, r: usize| {
                let (px, py) = cell_px(c, r);
                px >= oc as f64 && px < oc as f64 + size && py >= or as f64 && py < or as f64 + size
            };
            let mut cells = Vec::new();
            for r in 0..height {
                for c in 0..width {
                    if inside(c, r) {
                        cells.push((c, r));
                    }
                }
            }
            if cells.is_empty() {
                return Ok(None);
            }
            let c0 = cells.iter().map(|p| p.0).min().expect("non-empty");
            let c1 = cells.iter().map(|p| p.0).max().expect("non-empty");
            let r0 = cells.iter().map(|p| p.1).min().expect("non-empty");
            let r1 = cells.iter().map(|p| p.1).max().expect("non-empty");
            let (tw, th) = (c1 - c0 + 1, r1 - r0 + 1);
            let points: Vec<(f64, f64)> = cells
                .iter()
                .map(|&(c, r)| out_t.pixel_to_planar(c as f64 + 0.5, r as f64 + 0.5))
                .collect();
            let probs = predictor.predict(stack, (oc, or), plan.tile, &points, task)?;
            let mut grid = vec![None; tw * th];
            let mut weights = vec![0.0; tw * th];
            for (&(c, r), p) in cells.iter().zip(probs) {
                let k = (r - r0) * tw + (c - c0);
                let (px, py) = cell_px(c, r);
                weights[k] = gaussian_weight(px - cx, py - cy, plan.sigma);
                grid[k] = Some(p);
            }
            Ok(Some(TilePrediction {
                col: c0,
                row: r0,
                width: tw,
                height: th,
                probs: grid,
                weights,
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let k = predictor.n_classes(task);
    let (bands, weight_sum) = merge(width, height, k, &tiles)?;
    let mut meta = BTreeMap::new();
    meta.insert("mosaic.tile".into(), plan.tile.to_string());
    meta.insert("mosaic.stride".into(), plan.stride.to_string());
    meta.insert("mosaic.sigma".into(), format!("{}", plan.sigma));
    meta.insert("mosaic.resolution".into(), format!("{}", plan.resolution));
    meta.insert("mosaic.n_tiles".into(), plan.origins.len().to_string());
    meta.insert(
        "mosaic.heuristic_defaults".into(),
        if plan.defaulted.is_empty() {
            "none".into()
        } else {
            plan.defaulted.join(",")
        },
    );
    Ok(PredictionRaster {
        task,
        width,
        height,
        transform: out_t,
        bands,
        weight_sum,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tile_counts() {
        let one = PixelRegion {
            col: 0,
            row: 0,
            width: 64,
            height: 64,
        };
        assert_eq!(plan_tiles(&one, 64, 32).unwrap(), vec![(0, 0)]);
        let four = PixelRegion {
            col: 0,
            row: 0,
            width: 128,
            height: 128,
        };
        assert_eq!(plan_tiles(&four, 64, 32).unwrap().len(), 9);
        let small = PixelRegion {
            col: 10,
            row: 10,
            width: 20,
            height: 20,
        };
        assert_eq!(plan_tiles(&small, 64, 32).unwrap(), vec![(-12, -12)]);
        assert!(plan_tiles(&four, 64, 65).is_err());
    }

    #[test]
    fn gaussian_values() {
        assert_eq!(gaussian_weight(0.0, 0.0, 3.0), 1.0);
        assert!((gaussian_weight(3.0, 0.0, 3.0) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_is_an_error() {
        let t = TilePrediction {
            col: 0,
            row: 0,
            width: 1,
            height: 1,
            probs: vec![Some(vec![1.0])],
            weights: vec![1.0],
        };
        assert!(merge(2, 1, 1, &[t]).is_err());
    }

    /// Probability depends on the point and on the tile origin, so blending
    /// is observable.
    struct OriginAware;

    impl RegionPredictor for OriginAware {
        fn predict(&self, _s: &CovariateStack, origin: (i64, i64), _t: usize, points: &[(f64, f64)], _task: Task) -> Result<Vec<Vec<f64>>> {
            Ok(points
                .iter()
                .map(|&(x, y)| {
                    let p = 0.5 + 0.4 * ((x * 0.013 + y * 0.007) + origin.0 as f64 * 0.1 - origin.1 as f64 * 0.05).sin();
                    vec![1.0 - p, p]
                })
                .collect())
        }
    }

    struct Constant(f64);

    impl RegionPredictor for Constant {
        fn predict(&self, _s: &CovariateStack, _o: (i64, i64), _t: usize, points: &[(f64, f64)], _task: Task) -> Result<Vec<Vec<f64>>> {
            Ok(vec![vec![1.0 - self.0, self.0]; points.len()])
        }
    }

    fn stack(w: usize, h: usize) -> CovariateStack {
        use crate::data::synth::{generate_synthetic_world, SynthConfig};
        generate_synthetic_world(&SynthConfig {
            width: w,
            height: h,
            n_points: 60,
            ..SynthConfig::default()
        })
        .unwrap()
        .stack
    }

    fn cfg(tile: usize) -> MosaicConfig {
        MosaicConfig {
            tile: Some(tile),
            ..MosaicConfig::default()
        }
    }

    #[test]
    fn single_tile_reproduces_the_tile() {
        let s = stack(32, 32);
        let plan = MosaicPlan::new(&s, PixelRegion::whole(&s), 32, &cfg(32)).unwrap();
        assert_eq!(plan.origins, vec![(0, 0)]);
        let r = predict_region(&OriginAware, &s, &plan, Task::Nsp).unwrap();
        let pts: Vec<(f64, f64)> = (0..32 * 32)
            .map(|k| s.transform().pixel_to_planar((k % 32) as f64 + 0.5, (k / 32) as f64 + 0.5))
            .collect();
        let direct = OriginAware.predict(&s, (0, 0), 32, &pts, Task::Nsp).unwrap();
        for (k, p) in direct.iter().enumerate() {
            assert_eq!(r.bands[1][k], p[1]);
        }
    }

    #[test]
    fn constant_predictions_survive_blending() {
        let s = stack(80, 72);
        let plan = MosaicPlan::new(&s, PixelRegion::whole(&s), 32, &cfg(32)).unwrap();
        assert!(plan.origins.len() > 4);
        let r = predict_region(&Constant(0.3), &s, &plan, Task::Nsp).unwrap();
        assert!(r.bands[1].iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(r.bands[0].iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn matches_brute_force_blend() {
        let s = stack(70, 50);
        let mc = MosaicConfig {
            tile: Some(24),
            overlap: Some(0.6),
            sigma: Some(5.0),
            resolution: None,
        };
        let plan = MosaicPlan::new(&s, PixelRegion::whole(&s), 24, &mc).unwrap();
        let r = predict_region(&OriginAware, &s, &plan, Task::Nsp).unwrap();
        assert_eq!((r.width, r.height), (70, 50));
        let t = *s.transform();
        for row in 0..50 {
            for col in 0..70 {
                let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                let pt = t.pixel_to_planar(px, py);
                let (mut num, mut den) = (0.0, 0.0);
                for &(oc, or) in &plan.origins {
                    if px < oc as f64 || px >= (oc + 24) as f64 || py < or as f64 || py >= (or + 24) as f64 {
                        continue;
                    }
                    let w = (-((px - oc as f64 - 12.0).powi(2) + (py - or as f64 - 12.0).powi(2)) / 50.0).exp();
                    num += w * OriginAware.predict(&s, (oc, or), 24, &[pt], Task::Nsp).unwrap()[0][1];
                    den += w;
                }
                assert!((r.get(1, col, row) - num / den).abs() < 1e-10, "({col},{row})");
                assert!((r.weight_sum[row * 70 + col] - den).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn merge_is_order_invariant() {
        let s = stack(64, 64);
        let plan = MosaicPlan::new(&s, PixelRegion::whole(&s), 32, &cfg(32)).unwrap();
        let a = predict_region(&OriginAware, &s, &plan, Task::Nsp).unwrap();
        let mut rev = plan.clone();
        rev.origins.reverse();
        let b = predict_region(&OriginAware, &s, &rev, Task::Nsp).unwrap();
        for (x, y) in a.bands[1].iter().zip(&b.bands[1]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn defaults_are_flagged_and_raster_roundtrips() {
        let s = stack(48, 40);
        let plan = MosaicPlan::new(&s, PixelRegion::whole(&s), 32, &MosaicConfig::default()).unwrap();
        assert_eq!(plan.stride, 16);
        assert_eq!(plan.sigma, 8.0);
        let r = predict_region(&OriginAware, &s, &plan, Task::Nsp).unwrap();
        assert_eq!(r.meta["mosaic.heuristic_defaults"], "tile,overlap,sigma,resolution");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.raster");
        r.save(&path).unwrap();
        let back = PredictionRaster::load(&path).unwrap();
        assert_eq!(back.task, Task::Nsp);
        assert_eq!(back.meta, r.meta);
        for (x, y) in back.bands[1].iter().zip(&r.bands[1]) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn coarser_resolution_shrinks_the_grid() {
        let s = stack(64, 48);
        let px = s.transform().pixel_w.abs();
        let mc = MosaicConfig {
            tile: Some(32),
            resolution: Some(px * 3.0),
            ..MosaicConfig::default()
        };
        let plan = MosaicPlan::new(&s, PixelRegion::whole(&s), 32, &mc).unwrap();
        let r = predict_region(&Constant(0.5), &s, &plan, Task::Nsp).unwrap();
        assert_eq!((r.width, r.height), (21, 16));
    }

    proptest! {
        #[test]
        fn plan_covers_region(col in -5i64..5, row in -5i64..5, w in 1usize..300, h in 1usize..300,
                              tile in 8usize..80, frac in 0.05f64..1.0) {
            let stride = ((tile as f64 * frac) as usize).clamp(1, tile);
            let region = PixelRegion { col, row, width: w, height: h };
            let origins = plan_tiles(&region, tile, stride).unwrap();
            for r in row..row + h as i64 {
                for c in col..col + w as i64 {
                    let covered = origins.iter().any(|&(oc, or)| c >= oc && c < oc + tile as i64 && r >= or && r < or + tile as i64);
                    prop_assert!(covered, "pixel ({c},{r}) uncovered");
                }
            }
        }

        #[test]
        fn weight_decreases_with_radius(a in 0.0f64..50.0, b in 0.0f64..50.0, s in 0.5f64..20.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(gaussian_weight(lo, 0.0, s) >= gaussian_weight(0.0, hi, s));
            // strict only while the outer weight is still a normal float
            if hi * hi / (2.0 * s * s) < 700.0 {
                prop_assert!(gaussian_weight(lo, 0.0, s) > gaussian_weight(0.0, hi, s));
            }
        }
    }
}
