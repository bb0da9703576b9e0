//! The two-channel Gaussian output head shared by the CNN and FCN.
//!
//! The network emits raw `(a, b)` per cell in standardized precipitation
//! units; the forecast is `mu = offset + scale * a` and
//! `sigma = scale * softplus(b) + floor`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::nn::{softplus, softplus_grad};
use crate::report::Report;
use crate::scalar::{pairwise_sum, Scalar};
use crate::scoring::{crps_gradient_unchecked, crps_unchecked, GaussianField};

/// Smallest predictive spread, mm.
pub const SIGMA_FLOOR_MM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead<T> {
    pub offset: T,
    pub scale: T,
    pub sigma_floor: T,
}

impl<T: Scalar> GaussianHead<T> {
    /// Offset and scale from the mean and spread of the training
    /// observations over `cells`; the scale is at least 1 mm.
    pub fn fit(reports: &[Report<T>], cells: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(reports.len() * cells.len());
        for r in reports {
            let obs = r.observation()?.as_slice();
            values.extend(cells.iter().map(|&i| obs[i]));
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("no training observations".into()));
        }
        let n = T::from_usize_lossy(values.len());
        let mean = pairwise_sum(&values) / n;
        let sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
        let sd = (pairwise_sum(&sq) / n).sqrt();
        Ok(GaussianHead {
            offset: mean,
            scale: sd.max(T::one()),
            sigma_floor: T::lit(SIGMA_FLOOR_MM),
        })
    }

    #[inline]
    pub fn mu(&self, a: T) -> T {
        self.offset + self.scale * a
    }

    #[inline]
    pub fn sigma(&self, b: T) -> T {
        self.scale * softplus(b) + self.sigma_floor
    }

    pub fn to_gaussian(&self, a: &[T], b: &[T], rows: usize, cols: usize) -> Result<GaussianField<T>> {
        GaussianField::new(
            Field::from_vec(rows, cols, a.iter().map(|&v| self.mu(v)).collect())?,
            Field::from_vec(rows, cols, b.iter().map(|&v| self.sigma(v)).collect())?,
        )
    }

    /// Returns `weight * mean_{cells} CRPS` and adds its gradient with
    /// respect to the raw outputs into `grad_a` / `grad_b`. `cells` indexes
    /// `a`, `b`, `grad_*`; `obs_at` maps the same position to the observation.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_grad(
        &self,
        a: &[T],
        b: &[T],
        cells: &[usize],
        obs_at: impl Fn(usize) -> T,
        weight: T,
        grad_a: &mut [T],
        grad_b: &mut [T],
    ) -> T {
        let per_cell = weight / T::from_usize_lossy(cells.len());
        let mut scores = Vec::with_capacity(cells.len());
        for &i in cells {
            let (mu, sigma, y) = (self.mu(a[i]), self.sigma(b[i]), obs_at(i));
            scores.push(crps_unchecked(mu, sigma, y));
            let (d_mu, d_sigma) = crps_gradient_unchecked(mu, sigma, y);
            grad_a[i] += per_cell * d_mu * self.scale;
            grad_b[i] += per_cell * d_sigma * self.scale * softplus_grad(b[i]);
        }
        per_cell * pairwise_sum(&scores)
    }

    pub fn cast<U: Scalar>(&self) -> GaussianHead<U> {
        GaussianHead {
            offset: U::lit(self.offset.as_f64()),
            scale: U::lit(self.scale.as_f64()),
            sigma_floor: U::lit(self.sigma_floor.as_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let head = GaussianHead {
            offset: 12.0,
            scale: 30.0,
            sigma_floor: 1e-3,
        };
        let a = vec![0.3, -0.8, 1.7];
        let b = vec![-0.4, 0.9, 0.1];
        let y = [25.0, 3.0, 80.0];
        let cells = [0usize, 1, 2];
        let loss = |a: &[f64], b: &[f64]| {
            let mut ga = vec![0.0; 3];
            let mut gb = vec![0.0; 3];
            head.loss_and_grad(a, b, &cells, |i| y[i], 0.7, &mut ga, &mut gb)
        };
        let mut ga = vec![0.0; 3];
        let mut gb = vec![0.0; 3];
        head.loss_and_grad(&a, &b, &cells, |i| y[i], 0.7, &mut ga, &mut gb);
        let h = 1e-6;
        for i in 0..3 {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[i] += h;
            am[i] -= h;
            let fd = (loss(&ap, &b) - loss(&am, &b)) / (2.0 * h);
            assert!((fd - ga[i]).abs() < 1e-6 * fd.abs().max(1.0), "a[{i}]");
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            let fd = (loss(&a, &bp) - loss(&a, &bm)) / (2.0 * h);
            assert!((fd - gb[i]).abs() < 1e-6 * fd.abs().max(1.0), "b[{i}]");
        }
    }
}
