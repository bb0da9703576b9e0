//! Central-difference gradient checks for the layers and the CRPS loss.
//!
//! Each check contracts the layer output with a fixed probe tensor `g`, so the
//! scalar objective is `sum(g * layer(x))` and its analytic gradient is what
//! `backward(g)` accumulates.

use super::{Conv2d, Dense, Softplus, Tensor};
use crate::scoring::{crps_gradient, crps_unchecked};
use crate::Result;

pub const DEFAULT_STEP: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, 1e-6)`; the floor keeps exact zeros from
/// dividing by nothing.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

fn contract(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn with_values(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, v.to_vec()).expect("shape preserved")
}

/// Worst relative error over the weight, bias and input gradients.
pub fn check_conv2d(conv: &Conv2d<f64>, x: &Tensor<f64>, g: &Tensor<f64>, h: f64) -> Result<f64> {
    let mut layer = conv.clone();
    layer.propagate_input_grad = true;
    layer.zero_grad();
    layer.forward(x)?;
    let gx = layer.backward(g)?.expect("input grad requested");
    let (ws, bs) = (conv.weight.value.shape().to_vec(), conv.bias.value.shape().to_vec());
    let objective = |w: &Tensor<f64>, b: &Tensor<f64>, x: &Tensor<f64>| -> f64 {
        let c = Conv2d::from_params(w.clone(), b.clone()).expect("valid params");
        contract(&c.apply(x).expect("valid input"), g)
    };
    let (w0, b0) = (&conv.weight.value, &conv.bias.value);
    let nw = numeric_gradient(w0.as_slice(), h, |v| objective(&with_values(&ws, v), b0, x));
    let nb = numeric_gradient(b0.as_slice(), h, |v| objective(w0, &with_values(&bs, v), x));
    let nx = numeric_gradient(x.as_slice(), h, |v| objective(w0, b0, &with_values(x.shape(), v)));
    Ok(max_relative_error(layer.weight.grad.as_slice(), &nw)
        .max(max_relative_error(layer.bias.grad.as_slice(), &nb))
        .max(max_relative_error(gx.as_slice(), &nx)))
}

pub fn check_dense(dense: &Dense<f64>, x: &Tensor<f64>, g: &Tensor<f64>, h: f64) -> Result<f64> {
    let mut layer = dense.clone();
    layer.propagate_input_grad = true;
    layer.zero_grad();
    layer.forward(x)?;
    let gx = layer.backward(g)?.expect("input grad requested");
    let (ws, bs) = (dense.weight.value.shape().to_vec(), dense.bias.value.shape().to_vec());
    let objective = |w: &Tensor<f64>, b: &Tensor<f64>, x: &Tensor<f64>| -> f64 {
        let d = Dense::from_params(w.clone(), b.clone()).expect("valid params");
        contract(&d.apply(x).expect("valid input"), g)
    };
    let (w0, b0) = (&dense.weight.value, &dense.bias.value);
    let nw = numeric_gradient(w0.as_slice(), h, |v| objective(&with_values(&ws, v), b0, x));
    let nb = numeric_gradient(b0.as_slice(), h, |v| objective(w0, &with_values(&bs, v), x));
    let nx = numeric_gradient(x.as_slice(), h, |v| objective(w0, b0, &with_values(x.shape(), v)));
    Ok(max_relative_error(layer.weight.grad.as_slice(), &nw)
        .max(max_relative_error(layer.bias.grad.as_slice(), &nb))
        .max(max_relative_error(gx.as_slice(), &nx)))
}

pub fn check_softplus(x: &Tensor<f64>, g: &Tensor<f64>, h: f64) -> Result<f64> {
    let mut layer = Softplus::new();
    layer.forward(x)?;
    let gx = layer.backward(g)?;
    let nx = numeric_gradient(x.as_slice(), h, |v| {
        contract(&Softplus::apply(&with_values(x.shape(), v)).expect("finite"), g)
    });
    Ok(max_relative_error(gx.as_slice(), &nx))
}

/// Worst relative error of `(dCRPS/dmu, dCRPS/dsigma)`; the step is scaled
/// by `sigma` so the check is unit-free.
pub fn check_crps(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    let (dm, ds) = crps_gradient(mu, sigma, y)?;
    let h = DEFAULT_STEP * sigma;
    let n = numeric_gradient(&[mu, sigma], h, |v| crps_unchecked(v[0], v[1], y));
    Ok(max_relative_error(&[dm, ds], &n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(ci, co, kh, kw, hh, ww) in &[(3, 4, 2, 2, 5, 6), (2, 2, 1, 1, 3, 3), (1, 3, 3, 2, 4, 5)] {
            let mut conv = Conv2d::kaiming(ci, co, kh, kw, &mut rng).unwrap();
            conv.bias.value = random(&[co], &mut rng);
            let x = random(&[ci, hh, ww], &mut rng);
            let g = random(&[co, hh, ww], &mut rng);
            let err = check_conv2d(&conv, &x, &g, DEFAULT_STEP).unwrap();
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = Dense::kaiming(5, 3, &mut rng).unwrap();
        d.bias.value = random(&[3], &mut rng);
        let err = check_dense(&d, &random(&[4, 5], &mut rng), &random(&[4, 3], &mut rng), DEFAULT_STEP);
        assert!(err.unwrap() < 1e-6);
    }

    #[test]
    fn softplus_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random(&[2, 9], &mut rng);
        x.as_mut_slice()[0] = 35.0;
        x.as_mut_slice()[1] = -8.0;
        let err = check_softplus(&x, &random(&[2, 9], &mut rng), DEFAULT_STEP).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn crps_gradients() {
        for &(m, s, y) in &[(0.0, 1.0, 0.3), (120.0, 40.0, 10.0), (5.0, 0.01, 5.2), (0.0, 3.0, 0.0)] {
            assert!(check_crps(m, s, y).unwrap() < 1e-6);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let n = numeric_gradient(&[2.0], DEFAULT_STEP, |v| v[0] * v[0]);
        assert!(max_relative_error(&[4.0], &n) < 1e-8);
        assert!(max_relative_error(&[4.1], &n) > 1e-3);
    }
}
