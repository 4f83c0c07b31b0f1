use crate::data::geo::GeoTransform;
use crate::data::stack::CovariateStack;
use crate::error::{Error, Result};

/// Square multi-channel crop of a stack.
///
/// Pixels are stored channel-major (`C × size × size`, row-major within a
/// channel), matching the stack's band order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub transform: GeoTransform,
    /// Row-major mask: false where any band was nodata or the pixel came from
    /// edge replication outside the stack.
    pub valid: Vec<bool>,
    /// Stack pixel index of the tile's top-left pixel (may be negative).
    pub origin: (i64, i64),
}

impl Tile {
    #[inline]
    pub fn get(&self, channel: usize, col: usize, row: usize) -> f32 {
        self.data[(channel * self.size + row) * self.size + col]
    }

    pub fn channel(&self, channel: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// Planar coordinates to tile-normalized `[-1, 1]²` coordinates
    /// (`u` across columns, `v` down rows).
    pub fn normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let (c, r) = self.transform.planar_to_pixel(x, y);
        let s = self.size as f64;
        (2.0 * c / s - 1.0, 2.0 * r / s - 1.0)
    }

    /// Inverse of [`Tile::normalized`].
    pub fn planar(&self, u: f64, v: f64) -> (f64, f64) {
        let s = self.size as f64;
        self.transform.pixel_to_planar((u + 1.0) * s / 2.0, (v + 1.0) * s / 2.0)
    }

    pub fn contains_normalized(u: f64, v: f64) -> bool {
        (-1.0..=1.0).contains(&u) && (-1.0..=1.0).contains(&v)
    }
}

/// Top-left stack pixel of a `size` window whose center pixel is `(col, row)`.
pub fn window_origin(col: i64, row: i64, size: usize) -> (i64, i64) {
    (col - (size / 2) as i64, row - (size / 2) as i64)
}

/// Crops a `size`×`size` tile centered on the pixel under `center`.
///
/// The center pixel lands at tile index `size / 2`. Pixels outside the stack
/// replicate the nearest edge pixel; nodata is replaced by the band mean of
/// valid pixels and flagged in [`Tile::valid`].
pub fn crop_tile(stack: &CovariateStack, center: (f64, f64), size: usize) -> Result<Tile> {
    let (col, row) = stack
        .pixel_of(center.0, center.1)
        .ok_or_else(|| Error::OutOfBounds(format!("tile center ({:.1}, {:.1}) outside stack extent", center.0, center.1)))?;
    crop_tile_at_pixel(stack, col as i64, row as i64, size)
}

/// Crops a tile whose center pixel is `(col, row)`; the window must intersect
/// the stack.
pub fn crop_tile_at_pixel(stack: &CovariateStack, col: i64, row: i64, size: usize) -> Result<Tile> {
    if size == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    let (c0, r0) = window_origin(col, row, size);
    let (w, h) = (stack.width() as i64, stack.height() as i64);
    if c0 + size as i64 <= 0 || r0 + size as i64 <= 0 || c0 >= w || r0 >= h {
        return Err(Error::OutOfBounds(format!(
            "tile window at ({c0},{r0}) does not intersect the stack"
        )));
    }
    let channels = stack.band_count();
    let mut data = vec![0f32; channels * size * size];
    let mut valid = vec![true; size * size];
    for tr in 0..size {
        let sr_raw = r0 + tr as i64;
        let sr = sr_raw.clamp(0, h - 1) as usize;
        for tc in 0..size {
            let sc_raw = c0 + tc as i64;
            let sc = sc_raw.clamp(0, w - 1) as usize;
            let inside = sr_raw == sr as i64 && sc_raw == sc as i64;
            let mut ok = inside;
            for b in 0..channels {
                let v = stack.get(b, sc, sr);
                let v = if stack.is_nodata(v) {
                    ok = false;
                    stack.stats().mean[b] as f32
                } else {
                    v
                };
                data[(b * size + tr) * size + tc] = v;
            }
            valid[tr * size + tc] = ok;
        }
    }
    Ok(Tile {
        size,
        channels,
        data,
        transform: stack.transform().window(c0, r0),
        valid,
        origin: (c0, r0),
    })
}
