use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::gemm::gemm;
use crate::nn::init::kaiming_normal;
use crate::nn::{Param, Tensor};
use crate::scalar::{pairwise_sum, Scalar};

/// Fully connected layer over a batch: `[n, in] -> [n, out]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    /// `[n_out, n_in]`
    pub weight: Param<T>,
    /// `[n_out]`
    pub bias: Param<T>,
    pub propagate_input_grad: bool,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 2 || bias.shape() != [s[0]] {
            return Err(Error::Shape(format!(
                "dense weight {:?} / bias {:?}",
                s,
                bias.shape()
            )));
        }
        Ok(Dense {
            n_out: s[0],
            n_in: s[1],
            weight: Param::new(weight),
            bias: Param::new(bias),
            propagate_input_grad: true,
            cache: None,
        })
    }

    pub fn kaiming<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Result<Self> {
        let weight = kaiming_normal(n_in, &[n_out, n_in], rng)?;
        Self::from_params(weight, Tensor::zeros(&[n_out]))
    }

    fn batch(&self, x: &Tensor<T>) -> Result<usize> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.n_in {
            return Err(Error::Shape(format!(
                "dense expects [n, {}] input, got {:?}",
                self.n_in, s
            )));
        }
        Ok(s[0])
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.batch(x)?;
        let b = self.bias.value.as_slice();
        let mut out = Vec::with_capacity(n * self.n_out);
        for _ in 0..n {
            out.extend_from_slice(b);
        }
        gemm(n, self.n_in, self.n_out, x.as_slice(), false, self.weight.value.as_slice(), true, T::one(), &mut out);
        let y = Tensor::from_vec(&[n, self.n_out], out)?;
        y.ensure_finite("dense output")?;
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let x = self.cache.as_ref().ok_or(Error::NoForwardCache("dense"))?;
        let n = x.shape()[0];
        if grad_out.shape() != [n, self.n_out] {
            return Err(Error::Shape(format!(
                "dense upstream gradient {:?}, expected [{n}, {}]",
                grad_out.shape(),
                self.n_out
            )));
        }
        let g = grad_out.as_slice();
        for (o, gb) in self.bias.grad.as_mut_slice().iter_mut().enumerate() {
            let col: Vec<T> = g.iter().skip(o).step_by(self.n_out).copied().collect();
            *gb += pairwise_sum(&col);
        }
        gemm(self.n_out, n, self.n_in, g, true, x.as_slice(), false, T::one(), self.weight.grad.as_mut_slice());
        self.weight.grad.ensure_finite("dense weight gradient")?;
        if !self.propagate_input_grad {
            return Ok(None);
        }
        let mut gx = vec![T::zero(); n * self.n_in];
        gemm(n, self.n_out, self.n_in, g, false, self.weight.value.as_slice(), false, T::zero(), &mut gx);
        Tensor::from_vec(&[n, self.n_in], gx).map(Some)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_map() {
        let d = Dense::from_params(
            Tensor::from_vec(&[2, 3], vec![1.0, 0.0, -1.0, 2.0, 1.0, 0.5]).unwrap(),
            Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 0.0, 0.0, 2.0]).unwrap();
        let y = d.apply(&x).unwrap();
        assert_eq!(y.as_slice(), &[-1.5, 4.5, -1.5, 0.0]);
    }

    #[test]
    fn input_width_checked() {
        let d = Dense::<f64>::from_params(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        assert!(d.apply(&Tensor::zeros(&[4, 2])).is_err());
    }
}
