use std::collections::BTreeMap;

use crate::data::observations::Task;
use crate::data::stack::CovariateStack;
use crate::data::tile::{crop_tile_at_pixel, Tile};
use crate::error::{Error, Result};
use crate::model::encoder::N_STAGES;
use crate::model::miso::MisoModel;
use crate::training::finetune::PointGroup;

/// Queries per forward pass.
const QUERY_CHUNK: usize = 1024;

/// Tiles per encoder pass.
const TILE_BATCH: usize = 8;

/// Translation-robustness threshold for [`translation_probe`] at desk scale.
pub const TRANSLATION_TOLERANCE: f64 = 0.05;

/// Stack pixels per cell of the coarsest feature map.
fn feature_stride(model: &MisoModel) -> usize {
    let c = &model.config.satellite;
    c.tile_size / c.resolution(N_STAGES - 1)
}

/// Groups points by the nearest lattice node of side `stride`; each group's
/// tile is centered on its node, so every feature grid shares the stack-wide
/// phase of mosaic tiles whose origins are multiples of `stride`.
fn snapped_groups(pixels: &[(f64, f64)], stride: usize) -> Vec<PointGroup> {
    let s = stride.max(1) as f64;
    let mut nodes: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, &(c, r)) in pixels.iter().enumerate() {
        nodes.entry(((r / s).round() as i64, (c / s).round() as i64)).or_default().push(i);
    }
    nodes
        .into_iter()
        .map(|((kr, kc), members)| PointGroup {
            center: (kc * stride as i64, kr * stride as i64),
            members,
        })
        .collect()
}

/// Class probabilities for planar points; each row is `[absence, presence]`
/// for NSP and a 7-simplex for taxonomy.
pub fn predict_points(model: &MisoModel, stack: &CovariateStack, points: &[(f64, f64)], task: Task) -> Result<Vec<Vec<f64>>> {
    model.context.check_stack(stack)?;
    let transform = *stack.transform();
    let mut pixels = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if stack.pixel_of(x, y).is_none() {
            return Err(Error::OutOfBounds(format!("point ({x:.1}, {y:.1}) outside the stack")));
        }
        pixels.push(transform.planar_to_pixel(x, y));
    }
    let size = model.config.tile_size();
    let mut out = vec![Vec::new(); points.len()];
    let groups = snapped_groups(&pixels, feature_stride(model));
    for batch in groups.chunks(TILE_BATCH) {
        let tiles = batch
            .iter()
            .map(|g| crop_tile_at_pixel(stack, g.center.0, g.center.1, size))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tile> = tiles.iter().collect();
        let members: Vec<(usize, usize)> = batch
            .iter()
            .enumerate()
            .flat_map(|(t, g)| g.members.iter().map(move |&k| (t, k)))
            .collect();
        for chunk in members.chunks(QUERY_CHUNK) {
            let queries: Vec<(usize, (f64, f64))> = chunk
                .iter()
                .map(|&(t, k)| (t, tiles[t].normalized(points[k].0, points[k].1)))
                .collect();
            let e = model.embed_batch(&refs, &queries)?;
            for (&(_, k), p) in chunk.iter().zip(model.probabilities(&e.fused, task)?) {
                out[k] = p;
            }
        }
    }
    Ok(out)
}

/// Largest absolute probability difference for one point queried through a
/// tile centered on its pixel and through the same tile shifted by `shift`
/// pixels. Logs a warning above [`TRANSLATION_TOLERANCE`].
pub fn translation_probe(model: &MisoModel, stack: &CovariateStack, point: (f64, f64), shift: (i64, i64), task: Task) -> Result<f64> {
    let (c, r) = stack
        .pixel_of(point.0, point.1)
        .ok_or_else(|| Error::OutOfBounds(format!("point ({:.1}, {:.1}) outside the stack", point.0, point.1)))?;
    let size = model.config.tile_size() as i64;
    if shift.0.abs() >= size / 2 || shift.1.abs() >= size / 2 {
        return Err(Error::InvalidArgument("shift must stay within half a tile".into()));
    }
    let query = |dc: i64, dr: i64| -> Result<Vec<f64>> {
        let tile = crop_tile_at_pixel(stack, c as i64 + dc, r as i64 + dr, size as usize)?;
        let q = tile.normalized(point.0, point.1);
        Ok(model.predict_tile(&tile, &[q], task)?.remove(0))
    };
    let a = query(0, 0)?;
    let b = query(shift.0, shift.1)?;
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if diff > TRANSLATION_TOLERANCE {
        log::warn!("translation probe: max prob diff {diff:.4} exceeds {TRANSLATION_TOLERANCE}");
    } else {
        log::debug!("translation probe: max prob diff {diff:.4}");
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn snapped_groups_center_on_lattice_nodes(pts in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 1..60), stride in 1usize..64) {
            let groups = snapped_groups(&pts, stride);
            let mut seen = vec![false; pts.len()];
            for g in &groups {
                prop_assert_eq!(g.center.0 % stride as i64, 0);
                prop_assert_eq!(g.center.1 % stride as i64, 0);
                for &i in &g.members {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                    prop_assert!((pts[i].0 - g.center.0 as f64).abs() <= stride as f64 / 2.0 + 1e-9);
                    prop_assert!((pts[i].1 - g.center.1 as f64).abs() <= stride as f64 / 2.0 + 1e-9);
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
