use crate::error::{Error, Result};

/// Linear warm-up from `lr_warm` to `lr_max` over `warmup_steps`, then a
/// half-cosine decay from `lr_max` to zero at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, warmup_steps: usize, lr_warm: f64, lr_max: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} beyond schedule of {total_steps} steps"
        )));
    }
    if warmup_steps > total_steps {
        return Err(Error::InvalidArgument(format!(
            "warm-up of {warmup_steps} steps exceeds {total_steps} total"
        )));
    }
    if !(lr_warm >= 0.0 && lr_warm <= lr_max && lr_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= lr_warm <= lr_max, got {lr_warm}, {lr_max}"
        )));
    }
    if step < warmup_steps {
        return Ok(lr_warm + (lr_max - lr_warm) * step as f64 / warmup_steps as f64);
    }
    let decay = total_steps - warmup_steps;
    if decay == 0 {
        return Ok(lr_max);
    }
    let t = (step - warmup_steps) as f64 / decay as f64;
    Ok(lr_max * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchor_points() {
        assert_eq!(cosine_lr(0, 1000, 100, 5e-7, 5e-5).unwrap(), 5e-7);
        assert_eq!(cosine_lr(100, 1000, 100, 5e-7, 5e-5).unwrap(), 5e-5);
        assert!(cosine_lr(1000, 1000, 100, 5e-7, 5e-5).unwrap().abs() < 1e-12);
        let mid = cosine_lr(550, 1000, 100, 5e-7, 5e-5).unwrap();
        assert!((mid - 2.5e-5).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert!(cosine_lr(1001, 1000, 100, 5e-7, 5e-5).is_err());
        assert!(cosine_lr(0, 10, 11, 5e-7, 5e-5).is_err());
        assert!(cosine_lr(0, 10, 1, 5e-5, 5e-7).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_monotone_after_warmup(total in 2usize..500, w in 0usize..100, a in 0usize..500) {
            let w = w.min(total - 1);
            let s = a % total;
            let lr = cosine_lr(s, total, w, 1e-6, 1e-3).unwrap();
            prop_assert!((0.0..=1e-3).contains(&lr));
            if s >= w {
                prop_assert!(cosine_lr(s + 1, total, w, 1e-6, 1e-3).unwrap() <= lr);
            }
        }
    }
}
