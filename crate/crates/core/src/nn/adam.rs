use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// Applies one update to `params` using their accumulated gradients.
    /// The parameter list must keep the same order and shapes across calls.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len())
        {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad.len() != p.value.len() {
                return Err(Error::Shape(format!("gradient of parameter {i}")));
            }
            p.grad.ensure_finite(&format!("gradient of parameter {i}"))?;
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grads = p.grad.as_slice().to_vec();
            for (((w, g), mi), vi) in p
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.value.ensure_finite("parameter after update")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn param(values: Vec<f64>) -> Param<f64> {
        Param::new(Tensor::from_vec(&[values.len()], values).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(vec![1.0, -2.0]);
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_hand_formula() {
        let g = 0.37;
        let mut p = param(vec![1.0]);
        p.grad.as_mut_slice()[0] = g;
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut [&mut p]).unwrap();
        // m_hat = g, v_hat = g^2 after bias correction
        let expected = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
        assert!((p.value.as_slice()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_sign() {
        let mut p = param(vec![0.0, 0.0]);
        let mut opt = Adam::new(AdamConfig::default());
        let mut last = [0.0; 2];
        for _ in 0..10_000 {
            p.grad.as_mut_slice().copy_from_slice(&[2.5, -0.01]);
            last.copy_from_slice(p.value.as_slice());
            opt.step(&mut [&mut p]).unwrap();
        }
        let d0 = p.value.as_slice()[0] - last[0];
        let d1 = p.value.as_slice()[1] - last[1];
        assert!((d0 + 1e-3).abs() < 1e-9, "{d0}");
        assert!((d1 - 1e-3).abs() < 1e-9, "{d1}");
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut p = param(vec![1.0]);
        p.grad.as_mut_slice()[0] = f64::NAN;
        let mut opt = Adam::new(AdamConfig::default());
        assert!(matches!(opt.step(&mut [&mut p]), Err(Error::NonFinite(_))));
        assert_eq!(p.value.as_slice(), &[1.0]);
    }
}
