use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::{logistic, Scalar};

/// `ln(1 + e^x)`, returning `x` itself once `e^x` would dominate.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::lit(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`].
#[inline]
pub fn softplus_grad<T: Scalar>(x: T) -> T {
    logistic(x)
}

/// Elementwise softplus that remembers its input and `exp(-|x|)` for the
/// backward pass.
#[derive(Debug, Clone, Default)]
pub struct Softplus<T> {
    cache: Option<(Tensor<T>, Vec<T>)>,
}

impl<T: Scalar> Softplus<T> {
    pub fn new() -> Self {
        Softplus { cache: None }
    }

    fn eval(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        let mut y = vec![T::zero(); x.len()];
        let mut e = vec![T::zero(); x.len()];
        T::softplus_lanes(x.as_slice(), &mut y, &mut e);
        let y = Tensor::from_vec(x.shape(), y)?;
        y.ensure_finite("softplus output")?;
        Ok((y, e))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, e) = Self::eval(x)?;
        self.cache = Some((x.clone(), e));
        Ok(y)
    }

    pub fn apply(x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::eval(x)?.0)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, e) = self.cache.as_ref().ok_or(Error::NoForwardCache("softplus"))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::Shape("softplus upstream gradient".into()));
        }
        // logistic(x) from e = exp(-|x|)
        let data = x
            .as_slice()
            .iter()
            .zip(e)
            .zip(grad_out.as_slice())
            .map(|((&v, &e), &g)| {
                let s = if v >= T::zero() { T::one() } else { e };
                g * s / (T::one() + e)
            })
            .collect();
        Tensor::from_vec(x.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((softplus(0.0_f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(100.0_f64), 100.0);
        assert!(softplus(-40.0_f64) > 0.0);
        assert_eq!(softplus_grad(0.0_f64), 0.5);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &x in &[-5.0_f64, -0.3, 0.0, 0.7, 12.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - softplus_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut s = Softplus::<f64>::new();
        assert!(s.backward(&Tensor::zeros(&[2])).is_err());
    }
}
