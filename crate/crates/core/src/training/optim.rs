use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor, Var};

use crate::error::{Error, Result};

/// Adam with decoupled weight decay, updated in one host pass per parameter
/// with float64 moments.
#[derive(Debug)]
pub struct AdamW {
    vars: Vec<Var>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: i32,
}

impl AdamW {
    pub fn new(vars: Vec<Var>, lr: f64, weight_decay: f64) -> Result<Self> {
        if !(lr >= 0.0 && weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!("bad optimizer settings lr={lr} wd={weight_decay}")));
        }
        let m = vars.iter().map(|v| vec![0.0; v.elem_count()]).collect();
        let v = vars.iter().map(|v| vec![0.0; v.elem_count()]).collect();
        Ok(AdamW {
            vars,
            m,
            v,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t);
        let bias2 = 1.0 - self.beta2.powi(self.t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for ((var, m), v) in self.vars.iter().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
            let update = |i: usize, theta: f64, g: f64, m: &mut [f64], v: &mut [f64]| -> f64 {
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                theta * decay - lr * (m[i] / bias1) / ((v[i] / bias2).sqrt() + eps)
            };
            let t = match var.dtype() {
                DType::F32 => {
                    let g: Vec<f32> = g.flatten_all()?.to_vec1()?;
                    let theta: Vec<f32> = var.as_tensor().flatten_all()?.to_vec1()?;
                    let next: Vec<f32> = (0..theta.len())
                        .map(|i| update(i, theta[i] as f64, g[i] as f64, m, v) as f32)
                        .collect();
                    Tensor::from_vec(next, var.dims(), var.device())?
                }
                _ => {
                    let g: Vec<f64> = g.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
                    let theta: Vec<f64> = var.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
                    let next: Vec<f64> = (0..theta.len()).map(|i| update(i, theta[i], g[i], m, v)).collect();
                    Tensor::from_vec(next, var.dims(), var.device())?.to_dtype(var.dtype())?
                }
            };
            var.set(&t)?;
        }
        Ok(())
    }

    pub fn backward_step(&mut self, loss: &Tensor) -> Result<()> {
        let grads = loss.backward()?;
        self.step(&grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let w = Var::from_tensor(&Tensor::new(&[1.0f64, -2.0, 3.0], &Device::Cpu).unwrap()).unwrap();
        let mut opt = AdamW::new(vec![w.clone()], 0.1, 0.0).unwrap();
        let loss = (w.as_tensor() * Tensor::new(&[2.0f64, -0.5, 0.0], &Device::Cpu).unwrap())
            .unwrap()
            .sum_all()
            .unwrap();
        opt.backward_step(&loss).unwrap();
        let got: Vec<f64> = w.as_tensor().to_vec1().unwrap();
        assert!((got[0] - 0.9).abs() < 1e-6);
        assert!((got[1] + 1.9).abs() < 1e-6);
        assert_eq!(got[2], 3.0);
    }

    #[test]
    fn decoupled_decay_without_gradient_signal() {
        let w = Var::from_tensor(&Tensor::new(&[2.0f64], &Device::Cpu).unwrap()).unwrap();
        let mut opt = AdamW::new(vec![w.clone()], 0.5, 0.1).unwrap();
        let zero = Tensor::zeros(1, DType::F64, &Device::Cpu).unwrap();
        let loss = (w.as_tensor() * zero).unwrap().sum_all().unwrap();
        opt.backward_step(&loss).unwrap();
        let got = w.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((got - 2.0 * 0.95).abs() < 1e-12, "{got}");
    }
}
