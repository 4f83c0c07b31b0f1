//! Finite-difference verification of analytic gradients.

use candle_core::{DType, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::encoder::{AttentionMode, EncoderConfig, SwinEncoder, N_STAGES};
use crate::model::layers::{init_rng, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name of the parameter holding the worst entry.
    pub worst: String,
    pub n_checked: usize,
}

/// Compares analytic gradients of `loss` against central differences on up
/// to `samples` random entries per parameter tensor. Relative errors use the
/// denominator `max(|analytic|, |numeric|, 1e-3 · max|analytic|)`.
pub fn check_gradients<F>(ps: &ParamStore, loss: F, step: f64, samples: usize, rng: &mut ChaCha8Rng) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor>,
{
    if ps.dtype() != DType::F64 {
        return Err(Error::InvalidArgument("gradient checks need float64 parameters".into()));
    }
    let l = loss()?;
    let grads = l.backward()?;
    let mut analytic = Vec::new();
    let mut global_max = 0.0f64;
    for (name, var) in ps.iter() {
        let g: Vec<f64> = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1()?,
            None => vec![0.0; var.elem_count()],
        };
        global_max = g.iter().fold(global_max, |m, v| m.max(v.abs()));
        analytic.push((name.clone(), var.clone(), g));
    }
    let floor = 1e-3 * global_max;
    let scalar = |t: Tensor| -> Result<f64> { Ok(t.to_scalar::<f64>()?) };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        n_checked: 0,
    };
    for (name, var, g) in analytic {
        let base: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        let shape = var.dims().to_vec();
        for _ in 0..samples.min(base.len()) {
            let i = rng.random_range(0..base.len());
            let probe = |delta: f64| -> Result<f64> {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, shape.as_slice(), ps.device())?)?;
                scalar(loss()?)
            };
            let numeric = (probe(step)? - probe(-step)?) / (2.0 * step);
            var.set(&Tensor::from_vec(base.clone(), shape.as_slice(), ps.device())?)?;
            let denom = g[i].abs().max(numeric.abs()).max(floor);
            let err = if denom == 0.0 { 0.0 } else { (g[i] - numeric).abs() / denom };
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = name.clone();
            }
            report.n_checked += 1;
        }
    }
    Ok(report)
}

/// Smallest encoder exercising shifted windows, masking and patch merging.
pub fn tiny_encoder_config() -> EncoderConfig {
    EncoderConfig {
        in_channels: 3,
        base_dim: 8,
        window: 2,
        depths: [2, 2, 1, 1],
        heads: [1, 2, 2, 4],
        tile_size: 32,
        mlp_ratio: 2,
        attention: AttentionMode::Full,
    }
}

pub const PROBE_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCheck {
    pub report: GradCheckReport,
    /// Largest absolute gradient entry on the probe head.
    pub probe_grad_max: f64,
}

/// Gradient check point: every initialized parameter plus Gaussian noise of
/// this scale. Moves biases and norm gains off their constant init and keeps
/// the patch-norm input variance away from zero.
pub const CHECK_PERTURBATION: f64 = 0.2;

/// Probe loss `½ Σₛ ‖Pₛ · pool(Zₛ)‖²` over a float64 tiny encoder; checks
/// every parameter including the probe head.
pub fn encoder_backward_check(seed: u64, zero_probe: bool, step: f64) -> Result<EncoderCheck> {
    let cfg = tiny_encoder_config();
    let mut ps = ParamStore::new(DType::F64);
    let mut rng = init_rng(seed, 0);
    let encoder = SwinEncoder::new(&mut ps, "enc", &cfg, &mut rng)?;
    let noise = Normal::new(0.0, CHECK_PERTURBATION).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for (_, var) in ps.iter() {
        let v: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        let v: Vec<f64> = v.into_iter().map(|x| x + noise.sample(&mut rng)).collect();
        var.set(&Tensor::from_vec(v, var.dims(), ps.device())?)?;
    }
    let mut probes = Vec::with_capacity(N_STAGES);
    for s in 0..N_STAGES {
        let name = format!("probe{s}");
        let shape = [PROBE_DIM, cfg.stage_dim(s)];
        probes.push(if zero_probe {
            ps.constant(&name, &shape, 0.0)?
        } else {
            ps.trunc_normal(&name, &shape, 0.5, &mut rng)?
        });
    }
    let n = cfg.in_channels * cfg.tile_size * cfg.tile_size;
    let mut data_rng = init_rng(seed, 1);
    let input: Vec<f64> = (0..n).map(|_| data_rng.random_range(-2.0..2.0)).collect();
    let x = Tensor::from_vec(input, (1, cfg.in_channels, cfg.tile_size, cfg.tile_size), ps.device())?;
    let loss = || -> Result<Tensor> {
        let pyramid = encoder.forward(&x)?;
        let mut total: Option<Tensor> = None;
        for (z, p) in pyramid.iter().zip(&probes) {
            let pooled = z.mean((1, 2))?; // (1, c)
            let proj = pooled.matmul(&p.t()?)?;
            let term = (proj.sqr()?.sum_all()? * 0.5)?;
            total = Some(match total {
                Some(t) => (t + term)?,
                None => term,
            });
        }
        total.ok_or_else(|| Error::InvalidArgument("empty pyramid".into()))
    };
    let l = loss()?;
    let grads = l.backward()?;
    let mut probe_grad_max = 0.0f64;
    for p in &probes {
        if let Some(g) = grads.get(p) {
            let v: Vec<f64> = g.flatten_all()?.to_vec1()?;
            probe_grad_max = v.iter().fold(probe_grad_max, |m, x| m.max(x.abs()));
        }
    }
    let mut check_rng = init_rng(seed, 2);
    let report = check_gradients(&ps, loss, step, 3, &mut check_rng)?;
    Ok(EncoderCheck { report, probe_grad_max })
}
