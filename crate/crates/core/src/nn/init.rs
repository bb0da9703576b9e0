use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Zero-mean Gaussian weights with variance `2 / fan_in`.
pub fn kaiming_normal<T: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    shape: &[usize],
    rng: &mut R,
) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::InvalidArgument("fan_in must be positive".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn variance_is_two_over_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fan_in in [2usize, 25 * 4, 32] {
            let w: Tensor<f64> = kaiming_normal(fan_in, &[100_000], &mut rng).unwrap();
            let target = 2.0 / fan_in as f64;
            let v = variance(w.as_slice());
            assert!((v / target - 1.0).abs() < 0.03, "fan_in {fan_in}: {v} vs {target}");
        }
    }

    #[test]
    fn seeded_reproducibility() {
        let a: Tensor<f64> = kaiming_normal(8, &[4, 2], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b: Tensor<f64> = kaiming_normal(8, &[4, 2], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(kaiming_normal::<f64, _>(0, &[1], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
