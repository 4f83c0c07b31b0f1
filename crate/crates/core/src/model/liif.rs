//! Local implicit image function: area-weighted decoding of the four feature
//! cells surrounding a continuous query coordinate.
//!
//! Coordinates are tile-normalized: `u` runs across columns and `v` down rows,
//! both in `[-1, 1]`. On a stage grid of side `r`, cell `j` has its center at
//! `-1 + (2j + 1) / r`. The grid is edge-padded by one cell, so every in-tile
//! query has four neighbors; padded cells reuse the edge features but keep
//! their own (virtual) centers.

use candle_core::{Tensor, D};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::layers::{fan_in_std, Linear, ParamStore};

/// One of the four neighbors of a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    /// Clamped (row, col) of the feature cell supplying `z_t`.
    pub cell: (usize, usize),
    /// `S_t / S`: area of the rectangle spanned by the query and the
    /// diagonally opposite center, over the total.
    pub weight: f64,
    /// `x_q - v_t` in cell units (tile-normalized offset times `r / 2`),
    /// ordered (across, down).
    pub offset: (f64, f64),
}

pub fn cell_center(j: i64, r: usize) -> f64 {
    -1.0 + (2 * j + 1) as f64 / r as f64
}

/// The four neighbors of `(u, v)` on an `r × r` grid, ordered
/// (top-left, top-right, bottom-left, bottom-right).
pub fn query_corners(u: f64, v: f64, r: usize) -> Result<[Corner; 4]> {
    if !(-1.0..=1.0).contains(&u) || !(-1.0..=1.0).contains(&v) {
        return Err(Error::OutOfBounds(format!("query ({u}, {v}) outside the tile")));
    }
    let pu = (u + 1.0) * r as f64 / 2.0 - 0.5;
    let pv = (v + 1.0) * r as f64 / 2.0 - 0.5;
    let (c0, r0) = (pu.floor() as i64, pv.floor() as i64);
    let clamp = |j: i64| j.clamp(0, r as i64 - 1) as usize;
    let half = r as f64 / 2.0;
    let mut out = [Corner {
        cell: (0, 0),
        weight: 0.0,
        offset: (0.0, 0.0),
    }; 4];
    for (t, (dr, dc)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        let (row, col) = (r0 + dr, c0 + dc);
        let (cu, cv) = (cell_center(col, r), cell_center(row, r));
        // opposite center is one cell away along both axes
        let au = (pu - (c0 + 1 - dc) as f64).abs();
        let av = (pv - (r0 + 1 - dr) as f64).abs();
        out[t] = Corner {
            cell: (clamp(row), clamp(col)),
            weight: au * av,
            offset: ((u - cu) * half, (v - cv) * half),
        };
    }
    let s: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= s;
    }
    Ok(out)
}

/// Plain-f64 evaluation of one stage: `Σ_t w_t · f(z_t, offset_t)`.
/// `features` is row-major `r × r × c`.
pub fn implicit_query_reference(
    features: &[f64],
    r: usize,
    c: usize,
    q: (f64, f64),
    f: &dyn Fn(&[f64], (f64, f64)) -> Vec<f64>,
) -> Result<Vec<f64>> {
    if features.len() != r * r * c {
        return Err(Error::DimMismatch {
            expected: r * r * c,
            actual: features.len(),
        });
    }
    let mut out: Vec<f64> = Vec::new();
    for corner in query_corners(q.0, q.1, r)? {
        let (row, col) = corner.cell;
        let z = &features[(row * r + col) * c..(row * r + col + 1) * c];
        let y = f(z, corner.offset);
        if out.is_empty() {
            out = vec![0.0; y.len()];
        }
        for (o, v) in out.iter_mut().zip(y) {
            *o += corner.weight * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

/// Precomputed gather indices, weights and offsets for a set of queries on
/// one stage grid of a batch of tiles.
#[derive(Debug, Clone)]
pub struct QueryBatch {
    pub n_queries: usize,
    /// (4Q,) flat cell indices `(tile * r + row) * r + col`.
    pub cells: Tensor,
    /// (Q, 4, 1)
    pub weights: Tensor,
    /// (4Q, 2)
    pub offsets: Tensor,
}

impl QueryBatch {
    /// Queries on a single tile.
    pub fn new(queries: &[(f64, f64)], r: usize, ps: &ParamStore) -> Result<Self> {
        let tagged: Vec<(usize, (f64, f64))> = queries.iter().map(|&q| (0, q)).collect();
        Self::batched(&tagged, r, ps)
    }

    /// Queries tagged with the index of the tile they belong to.
    pub fn batched(queries: &[(usize, (f64, f64))], r: usize, ps: &ParamStore) -> Result<Self> {
        let q = queries.len();
        let mut cells = Vec::with_capacity(4 * q);
        let mut weights = Vec::with_capacity(4 * q);
        let mut offsets = Vec::with_capacity(8 * q);
        for &(t, (u, v)) in queries {
            for c in query_corners(u, v, r)? {
                cells.push(((t * r + c.cell.0) * r + c.cell.1) as u32);
                weights.push(c.weight);
                offsets.push(c.offset.0);
                offsets.push(c.offset.1);
            }
        }
        let dev = ps.device();
        Ok(QueryBatch {
            n_queries: q,
            cells: Tensor::from_vec(cells, 4 * q, dev)?,
            weights: Tensor::from_vec(weights, (q, 4, 1), dev)?.to_dtype(ps.dtype())?,
            offsets: Tensor::from_vec(offsets, (4 * q, 2), dev)?.to_dtype(ps.dtype())?,
        })
    }
}

/// `f_θ(z, δ)`: two ReLU hidden layers of width `c`, then a projection to `D`.
/// The first layer is split into a feature part (applied once per cell) and
/// an offset part.
#[derive(Debug, Clone)]
pub struct MlpDecoder {
    pub z_proj: Linear,
    pub offset_proj: Linear,
    pub fc2: Linear,
    pub fc3: Linear,
}

impl MlpDecoder {
    pub fn new(ps: &mut ParamStore, name: &str, c: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let relu_in = fan_in_std(c + 2, 2.0);
        Ok(MlpDecoder {
            z_proj: Linear::with_std(ps, &format!("{name}.fc1_z"), c, c, true, relu_in, rng)?,
            offset_proj: Linear::with_std(ps, &format!("{name}.fc1_offset"), 2, c, false, relu_in, rng)?,
            fc2: Linear::with_std(ps, &format!("{name}.fc2"), c, c, true, fan_in_std(c, 2.0), rng)?,
            fc3: Linear::with_std(ps, &format!("{name}.fc3"), c, out_dim, true, fan_in_std(c, 1.0), rng)?,
        })
    }

    /// `z`: stage maps (B, r, r, c) or a single (r, r, c) map. Returns (Q, D).
    pub fn query(&self, z: &Tensor, batch: &QueryBatch) -> Result<Tensor> {
        let c = z.dim(D::Minus1)?;
        let cells = self.z_proj.forward(&z.reshape((z.elem_count() / c, c))?)?;
        let h = cells
            .index_select(&batch.cells, 0)?
            .add(&self.offset_proj.forward(&batch.offsets)?)?
            .relu()?;
        let h = self.fc2.forward(&h)?.relu()?;
        let y = self.fc3.forward(&h)?;
        let d = y.dim(1)?;
        Ok(y.reshape((batch.n_queries, 4, d))?.broadcast_mul(&batch.weights)?.sum(1)?)
    }

    /// Plain-f64 evaluation of `f_θ(z, δ)` from the current weights.
    pub fn eval_reference(&self, z: &[f64], offset: (f64, f64)) -> Result<Vec<f64>> {
        let dense = |l: &Linear, x: &[f64]| -> Result<Vec<f64>> {
            let w: Vec<Vec<f64>> = l.weight.to_dtype(candle_core::DType::F64)?.to_vec2()?;
            let b: Option<Vec<f64>> = match &l.bias {
                Some(b) => Some(b.to_dtype(candle_core::DType::F64)?.to_vec1()?),
                None => None,
            };
            Ok(w.iter()
                .enumerate()
                .map(|(o, row)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b.as_ref().map_or(0.0, |b| b[o]))
                .collect())
        };
        let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
        let a = dense(&self.z_proj, z)?;
        let o = dense(&self.offset_proj, &[offset.0, offset.1])?;
        let h = relu(a.iter().zip(&o).map(|(x, y)| x + y).collect());
        let h = relu(dense(&self.fc2, &h)?);
        dense(&self.fc3, &h)
    }
}

/// Aggregates per-stage decodings of a batch pyramid. `pyramid[s]` is
/// (B, r_s, r_s, c_s) and `batches[s]` the queries on that stage grid.
pub fn multiscale_query(pyramid: &[Tensor], decoders: &[MlpDecoder], batches: &[QueryBatch], aggregation: Aggregation) -> Result<Tensor> {
    if pyramid.len() != decoders.len() || pyramid.len() != batches.len() || pyramid.is_empty() {
        return Err(Error::InvalidArgument("pyramid, decoders and query batches must align".into()));
    }
    let mut acc: Option<Tensor> = None;
    for ((z, dec), b) in pyramid.iter().zip(decoders).zip(batches) {
        let y = dec.query(z, b)?;
        acc = Some(match acc {
            None => y,
            Some(a) => (a + y)?,
        });
    }
    let out = acc.expect("non-empty pyramid");
    Ok(match aggregation {
        Aggregation::Sum => out,
        Aggregation::Mean => (out / pyramid.len() as f64)?,
    })
}

/// Elementwise sum of the two modality embeddings.
pub fn fuse(g_sat: &Tensor, g_cov: &Tensor) -> Result<Tensor> {
    if g_sat.dims() != g_cov.dims() {
        return Err(Error::DimMismatch {
            expected: g_sat.dim(D::Minus1)?,
            actual: g_cov.dim(D::Minus1)?,
        });
    }
    Ok((g_sat + g_cov)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::init_rng;
    use candle_core::{DType, Device};
    use proptest::prelude::*;

    #[test]
    fn query_at_center_has_unit_weight() {
        let r = 8;
        let u = cell_center(3, r);
        let v = cell_center(5, r);
        let cs = query_corners(u, v, r).unwrap();
        let hit: Vec<_> = cs.iter().filter(|c| c.weight > 0.0).collect();
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].weight, 1.0);
        assert_eq!(hit[0].cell, (5, 3));
        assert_eq!(hit[0].offset, (0.0, 0.0));
    }

    #[test]
    fn midpoint_has_equal_weights() {
        let r = 4;
        let u = 0.5 * (cell_center(1, r) + cell_center(2, r));
        let cs = query_corners(u, u, r).unwrap();
        for c in cs {
            assert!((c.weight - 0.25).abs() < 1e-12);
        }
        assert!(query_corners(1.0 + 1e-9, 0.0, r).is_err());
    }

    #[test]
    fn tensor_path_matches_reference() {
        let mut ps = ParamStore::new(DType::F64);
        let mut rng = init_rng(4, 0);
        let (r, c, d) = (4, 6, 5);
        let dec = MlpDecoder::new(&mut ps, "dec", c, d, &mut rng).unwrap();
        for name in ["dec.fc1_z.bias", "dec.fc2.bias", "dec.fc3.bias"] {
            let n = ps.get(name).unwrap().elem_count();
            let v: Vec<f64> = (0..n).map(|i| 0.01 * i as f64 - 0.02).collect();
            ps.assign(name, &Tensor::from_vec(v, n, &Device::Cpu).unwrap()).unwrap();
        }
        let feats: Vec<f64> = (0..r * r * c).map(|i| ((i * 37 % 17) as f64 - 8.0) / 4.0).collect();
        let z = Tensor::from_vec(feats.clone(), (r, r, c), &Device::Cpu).unwrap();
        let queries = [(-1.0, -1.0), (0.13, -0.77), (1.0, 1.0), (0.0, 0.5)];
        let batch = QueryBatch::new(&queries, r, &ps).unwrap();
        let got: Vec<Vec<f64>> = dec.query(&z, &batch).unwrap().to_vec2().unwrap();
        for (qi, q) in queries.iter().enumerate() {
            let f = |z: &[f64], o: (f64, f64)| dec.eval_reference(z, o).unwrap();
            let want = implicit_query_reference(&feats, r, c, *q, &f).unwrap();
            for k in 0..d {
                assert!((got[qi][k] - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fuse_rules() {
        let a = Tensor::new(&[1.0f64, -2.0], &Device::Cpu).unwrap();
        let z = Tensor::zeros(2, DType::F64, &Device::Cpu).unwrap();
        assert_eq!(fuse(&a, &z).unwrap().to_vec1::<f64>().unwrap(), vec![1.0, -2.0]);
        assert_eq!(fuse(&a, &a.neg().unwrap()).unwrap().to_vec1::<f64>().unwrap(), vec![0.0, 0.0]);
        let b = Tensor::zeros(3, DType::F64, &Device::Cpu).unwrap();
        assert!(fuse(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn weights_form_a_partition_of_unity(u in -1.0f64..=1.0, v in -1.0f64..=1.0, r in 1usize..40) {
            let cs = query_corners(u, v, r).unwrap();
            let s: f64 = cs.iter().map(|c| c.weight).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for c in cs {
                prop_assert!((0.0..=1.0).contains(&c.weight));
                prop_assert!(c.cell.0 < r && c.cell.1 < r);
            }
        }

        #[test]
        fn identity_decoder_is_lipschitz(
            u in -0.99f64..0.99, v in -0.99f64..0.99, du in -1e-3f64..1e-3, dv in -1e-3f64..1e-3
        ) {
            let (r, c) = (8, 3);
            let feats: Vec<f64> = (0..r * r * c).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
            let id = |z: &[f64], _: (f64, f64)| z.to_vec();
            let a = implicit_query_reference(&feats, r, c, (u, v), &id).unwrap();
            let b = implicit_query_reference(&feats, r, c, (u + du, v + dv), &id).unwrap();
            // |∇| ≤ (max feature jump) · r/2 per axis
            let bound = 2.0 * (r as f64 / 2.0) * (du.abs() + dv.abs()) + 1e-12;
            for k in 0..c {
                prop_assert!((a[k] - b[k]).abs() <= bound);
            }
        }
    }
}
