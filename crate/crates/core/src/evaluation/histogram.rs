use crate::error::{Error, Result};

/// Normalized counts over `n_bins` equal-width bins of `[0, 1]`; bin `i`
/// covers `[i/n, (i+1)/n)` and the last bin also includes 1.
pub fn probability_histogram(probs: &[f64], n_bins: usize) -> Result<Vec<f64>> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if probs.is_empty() {
        return Err(Error::InsufficientData("histogram of zero probabilities".into()));
    }
    let mut counts = vec![0u64; n_bins];
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfBounds(format!("probability {p} outside [0, 1]")));
        }
        counts[bin_of(p, n_bins)] += 1;
    }
    let n = probs.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

pub fn bin_of(p: f64, n_bins: usize) -> usize {
    ((p * n_bins as f64).floor() as usize).min(n_bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_bin_mass() {
        let h = probability_histogram(&[0.05; 40], 10).unwrap();
        assert_eq!(h[0], 1.0);
        assert_eq!(bin_of(1.0, 10), 9);
        assert_eq!(bin_of(0.1, 10), 1);
        assert!(probability_histogram(&[1.5], 10).is_err());
        assert!(probability_histogram(&[f64::NAN], 10).is_err());
    }

    proptest! {
        #[test]
        fn mass_is_conserved(probs in prop::collection::vec(0.0f64..=1.0, 1..2000), bins in 1usize..40) {
            let h = probability_histogram(&probs, bins).unwrap();
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
