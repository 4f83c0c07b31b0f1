use crate::data::stack::CovariateStack;
use crate::error::{Error, Result};

/// Per-band mean over pixels whose centers lie within `buffer_d` meters of
/// the point, then `x, y` when `include_xy`.
///
/// `buffer_d == 0`, or a buffer containing no pixel center, uses the pixel
/// that contains the point. Nodata pixels are skipped.
pub fn extract_features(stack: &CovariateStack, point: (f64, f64), buffer_d: f64, include_xy: bool) -> Result<Vec<f64>> {
    if !(buffer_d >= 0.0) {
        return Err(Error::InvalidArgument(format!("buffer must be >= 0, got {buffer_d}")));
    }
    let (x, y) = point;
    let (pc, pr) = stack
        .pixel_of(x, y)
        .ok_or_else(|| Error::OutOfBounds(format!("point ({x:.1}, {y:.1}) outside stack")))?;
    let members = if buffer_d > 0.0 {
        disk_members(stack, point, buffer_d)
    } else {
        Vec::new()
    };
    let members = if members.is_empty() { vec![(pc, pr)] } else { members };
    let nb = stack.band_count();
    let mut out = Vec::with_capacity(nb + 2);
    for b in 0..nb {
        let (mut sum, mut n) = (0.0f64, 0usize);
        for &(c, r) in &members {
            let v = stack.get(b, c, r);
            if !stack.is_nodata(v) {
                sum += v as f64;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::InsufficientData(format!(
                "band `{}` is nodata throughout the buffer at ({x:.1}, {y:.1})",
                stack.bands()[b].name
            )));
        }
        out.push(sum / n as f64);
    }
    if include_xy {
        out.push(x);
        out.push(y);
    }
    Ok(out)
}

/// Pixels (col, row) whose centers are within `d` of the point, in row-major order.
pub fn disk_members(stack: &CovariateStack, point: (f64, f64), d: f64) -> Vec<(usize, usize)> {
    let t = stack.transform();
    let (c_lo, r_a) = t.planar_to_pixel(point.0 - d, point.1 - d);
    let (c_hi, r_b) = t.planar_to_pixel(point.0 + d, point.1 + d);
    let clamp_c = |v: f64| (v.floor() as i64).clamp(0, stack.width() as i64 - 1) as usize;
    let clamp_r = |v: f64| (v.floor() as i64).clamp(0, stack.height() as i64 - 1) as usize;
    let (c0, c1) = (clamp_c(c_lo.min(c_hi)), clamp_c(c_lo.max(c_hi)));
    let (r0, r1) = (clamp_r(r_a.min(r_b)), clamp_r(r_a.max(r_b)));
    let mut out = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (cx, cy) = t.pixel_center(c as i64, r as i64);
            if (cx - point.0).powi(2) + (cy - point.1).powi(2) <= d * d {
                out.push((c, r));
            }
        }
    }
    out
}

pub fn feature_names(stack: &CovariateStack, include_xy: bool) -> Vec<String> {
    let mut names: Vec<String> = stack.bands().iter().map(|b| b.name.clone()).collect();
    if include_xy {
        names.push("x".into());
        names.push("y".into());
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::geo::GeoTransform;
    use crate::data::stack::{BandGroup, BandInfo};

    fn stack() -> CovariateStack {
        let t = GeoTransform::north_up(0.0, 200.0, 10.0).unwrap();
        let a: Vec<f32> = (0..400).map(|i| i as f32).collect();
        let b = vec![3.5f32; 400];
        CovariateStack::new(
            20,
            20,
            vec![BandInfo::new("a", BandGroup::Satellite), BandInfo::new("c", BandGroup::Covariate)],
            vec![a, b],
            t,
            -9999.0,
        )
        .unwrap()
    }

    #[test]
    fn buffer_zero_is_pixel_lookup() {
        let s = stack();
        let f = extract_features(&s, (33.0, 147.0), 0.0, true).unwrap();
        assert_eq!(f, vec![s.get(0, 3, 5) as f64, 3.5, 33.0, 147.0]);
    }

    #[test]
    fn constant_band_mean() {
        let s = stack();
        for d in [5.0, 25.0, 50.0, 100.0] {
            let f = extract_features(&s, (101.0, 99.0), d, false).unwrap();
            assert_eq!(f[1], 3.5);
        }
        assert!(extract_features(&s, (-5.0, 0.0), 10.0, false).is_err());
    }

    #[test]
    fn tiny_buffer_falls_back_to_pixel() {
        let s = stack();
        let f = extract_features(&s, (31.0, 141.0), 1.0, false).unwrap();
        assert_eq!(f[0], s.get(0, 3, 5) as f64);
    }
}
