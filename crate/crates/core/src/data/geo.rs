use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// North-up affine transform between pixel space and planar meters.
///
/// Pixel `(col, row)` has its top-left corner at
/// `(origin_x + col * pixel_w, origin_y + row * pixel_h)`; rotation terms are
/// always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_w: f64, pixel_h: f64) -> Result<Self> {
        let t = GeoTransform {
            origin_x,
            origin_y,
            pixel_w,
            pixel_h,
        };
        t.validate()?;
        Ok(t)
    }

    /// North-up transform with square pixels.
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_size: f64) -> Result<Self> {
        Self::new(origin_x, origin_y, pixel_size, -pixel_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_w > 0.0) || !self.pixel_w.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pixel width must be positive, got {}",
                self.pixel_w
            )));
        }
        if self.pixel_h == 0.0 || !self.pixel_h.is_finite() {
            return Err(Error::InvalidArgument("pixel height must be non-zero".into()));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        Ok(())
    }

    /// Fractional pixel coordinates (corner convention) to planar meters.
    pub fn pixel_to_planar(&self, col: f64, row: f64) -> (f64, f64) {
        (self.origin_x + col * self.pixel_w, self.origin_y + row * self.pixel_h)
    }

    /// Planar meters to fractional pixel coordinates (corner convention).
    pub fn planar_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin_x) / self.pixel_w, (y - self.origin_y) / self.pixel_h)
    }

    /// Planar coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: i64, row: i64) -> (f64, f64) {
        self.pixel_to_planar(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Index of the pixel containing the planar point.
    pub fn containing_pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let (c, r) = self.planar_to_pixel(x, y);
        (c.floor() as i64, r.floor() as i64)
    }

    /// Transform of a window whose top-left pixel is `(col, row)` in this grid.
    pub fn window(&self, col: i64, row: i64) -> GeoTransform {
        let (ox, oy) = self.pixel_to_planar(col as f64, row as f64);
        GeoTransform {
            origin_x: ox,
            origin_y: oy,
            ..*self
        }
    }

    /// Same origin, pixels scaled by `factor` (e.g. an output grid at a coarser resolution).
    pub fn rescaled(&self, factor: f64) -> GeoTransform {
        GeoTransform {
            pixel_w: self.pixel_w * factor,
            pixel_h: self.pixel_h * factor,
            ..*self
        }
    }

    /// GDAL-ordered coefficient array.
    pub fn to_gdal(&self) -> [f64; 6] {
        [self.origin_x, self.pixel_w, 0.0, self.origin_y, 0.0, self.pixel_h]
    }

    pub fn from_gdal(c: [f64; 6]) -> Result<Self> {
        if c[2] != 0.0 || c[4] != 0.0 {
            return Err(Error::InvalidArgument("rotated geotransforms are not supported".into()));
        }
        Self::new(c[0], c[3], c[1], c[5])
    }
}

/// Axis-aligned planar bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// Affine map onto `[-1, 1]²`, clamped to the box.
    pub fn normalize(&self, x: f64, y: f64) -> (f64, f64) {
        let u = 2.0 * (x - self.min_x) / self.width() - 1.0;
        let v = 2.0 * (y - self.min_y) / self.height() - 1.0;
        (u.clamp(-1.0, 1.0), v.clamp(-1.0, 1.0))
    }
}
