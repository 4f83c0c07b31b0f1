use crate::error::{Error, Result};

/// Single-band row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BandShapeMismatch(format!(
                "grid data has {} values, expected {width}x{height}",
                data.len()
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Bilinear sample at fractional cell-center coordinates (`(0,0)` is the
    /// center of the first cell). Beyond the outermost centers the edge
    /// segment is extended linearly, so linear fields are reproduced exactly.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f64 {
        let (i0, tu) = segment(u, self.width);
        let (j0, tv) = segment(v, self.height);
        let i1 = (i0 + 1).min(self.width - 1);
        let j1 = (j0 + 1).min(self.height - 1);
        let f = |c: usize, r: usize| self.get(c, r) as f64;
        let top = f(i0, j0) * (1.0 - tu) + f(i1, j0) * tu;
        let bottom = f(i0, j1) * (1.0 - tu) + f(i1, j1) * tu;
        top * (1.0 - tv) + bottom * tv
    }
}

fn segment(u: f64, n: usize) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let i0 = (u.floor() as i64).clamp(0, n as i64 - 2) as usize;
    (i0, u - i0 as f64)
}

/// Resamples a grid from `src_res` to a finer (or equal) `dst_res` with
/// bilinear interpolation on pixel centers.
///
/// The output covers the same extent: `round(width * src_res / dst_res)`
/// cells per row.
pub fn upsample_band(grid: &Grid, src_res: f64, dst_res: f64) -> Result<Grid> {
    if !(src_res > 0.0) || !(dst_res > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "resolutions must be positive (src {src_res}, dst {dst_res})"
        )));
    }
    if src_res < dst_res {
        return Err(Error::InvalidArgument(format!(
            "upsampling requires src_res >= dst_res ({src_res} < {dst_res})"
        )));
    }
    let ratio = src_res / dst_res;
    let out_w = ((grid.width as f64 * ratio).round() as usize).max(1);
    let out_h = ((grid.height as f64 * ratio).round() as usize).max(1);
    let mut data = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        let v = (r as f64 + 0.5) / ratio - 0.5;
        for c in 0..out_w {
            let u = (c as f64 + 0.5) / ratio - 0.5;
            data.push(grid.sample_bilinear(u, v) as f32);
        }
    }
    Grid::new(out_w, out_h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_preserved() {
        let g = Grid::filled(3, 2, 5.0);
        let up = upsample_band(&g, 800.0, 10.0).unwrap();
        assert_eq!((up.width, up.height), (240, 160));
        assert!(up.data.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn linear_ramp_is_reproduced() {
        // value = 2*x_m + 3*y_m (meters at cell centers)
        let (w, h, src) = (6usize, 5usize, 800.0);
        let data = (0..w * h)
            .map(|i| {
                let (c, r) = ((i % w) as f64, (i / w) as f64);
                ((2.0 * (c + 0.5) * src + 3.0 * (r + 0.5) * src) / 40_000.0) as f32
            })
            .collect();
        let g = Grid::new(w, h, data).unwrap();
        let dst = 100.0;
        let up = upsample_band(&g, src, dst).unwrap();
        for r in 0..up.height {
            for c in 0..up.width {
                let expected = (2.0 * (c as f64 + 0.5) * dst + 3.0 * (r as f64 + 0.5) * dst) / 40_000.0;
                assert!((up.get(c, r) as f64 - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_resolutions() {
        let g = Grid::filled(2, 2, 1.0);
        assert!(upsample_band(&g, 0.0, 10.0).is_err());
        assert!(upsample_band(&g, 10.0, -1.0).is_err());
        assert!(upsample_band(&g, 10.0, 20.0).is_err());
    }
}
