//! Fourier positional encoding of planar coordinates and the coordinate MLP.

use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::layers::{fan_in_std, Linear, ParamStore};

/// `[λ, φ, sin(2⁰πλ), cos(2⁰πλ), sin(2⁰πφ), cos(2⁰πφ), …]` for k = 0..L-1.
pub fn positional_encode(lambda: f64, phi: f64, l: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 + 4 * l);
    out.push(lambda);
    out.push(phi);
    for k in 0..l {
        let f = (1u64 << k) as f64 * std::f64::consts::PI;
        out.push((f * lambda).sin());
        out.push((f * lambda).cos());
        out.push((f * phi).sin());
        out.push((f * phi).cos());
    }
    out
}

/// Three fully connected layers `2+4L → D → D → D` with ReLU between.
#[derive(Debug, Clone)]
pub struct GeoEncoder {
    pub frequencies: usize,
    pub fc1: Linear,
    pub fc2: Linear,
    pub fc3: Linear,
}

impl GeoEncoder {
    pub fn new(ps: &mut ParamStore, name: &str, frequencies: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let in_dim = 2 + 4 * frequencies;
        Ok(GeoEncoder {
            frequencies,
            fc1: Linear::with_std(ps, &format!("{name}.fc1"), in_dim, out_dim, true, fan_in_std(in_dim, 2.0), rng)?,
            fc2: Linear::with_std(ps, &format!("{name}.fc2"), out_dim, out_dim, true, fan_in_std(out_dim, 2.0), rng)?,
            fc3: Linear::with_std(ps, &format!("{name}.fc3"), out_dim, out_dim, true, fan_in_std(out_dim, 1.0), rng)?,
        })
    }

    /// `pe`: (Q, 2+4L) → (Q, D).
    pub fn forward(&self, pe: &Tensor) -> Result<Tensor> {
        let h = self.fc1.forward(pe)?.relu()?;
        let h = self.fc2.forward(&h)?.relu()?;
        self.fc3.forward(&h)
    }

    /// Encodes already-normalized coordinates.
    pub fn embed(&self, coords: &[(f64, f64)], ps: &ParamStore) -> Result<Tensor> {
        let width = 2 + 4 * self.frequencies;
        let flat: Vec<f64> = coords
            .iter()
            .flat_map(|&(l, p)| positional_encode(l, p, self.frequencies))
            .collect();
        let pe = Tensor::from_vec(flat, (coords.len(), width), ps.device())?.to_dtype(ps.dtype())?;
        self.forward(&pe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::init_rng;
    use candle_core::DType;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(
            positional_encode(0.0, 0.0, 2),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
        );
        for l in [1, 4, 10] {
            assert_eq!(positional_encode(0.3, -0.2, l).len(), 2 + 4 * l);
        }
        let pe = positional_encode(1.0, 0.0, 1);
        let want = [1.0, 0.0, 0.0, -1.0, 0.0, 1.0];
        for (a, b) in pe.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_is_deterministic_with_dim_d() {
        let mut ps = ParamStore::new(DType::F32);
        let g = GeoEncoder::new(&mut ps, "geo", 3, 12, &mut init_rng(0, 0)).unwrap();
        let a: Vec<Vec<f32>> = g.embed(&[(0.1, 0.2)], &ps).unwrap().to_vec2().unwrap();
        let b: Vec<Vec<f32>> = g.embed(&[(0.1, 0.2)], &ps).unwrap().to_vec2().unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 12);
    }

    proptest! {
        #[test]
        fn trig_entries_bounded(l in -1.0f64..=1.0, p in -1.0f64..=1.0, n in 0usize..12) {
            for v in &positional_encode(l, p, n)[2..] {
                prop_assert!((-1.0..=1.0).contains(v));
            }
        }
    }
}
