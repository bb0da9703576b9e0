//! Stride-1 2D cross-correlation with one-sided zero padding.
//!
//! A `kh x kw` kernel is padded by `kh - 1` rows at the bottom (north) and
//! `kw - 1` columns at the right (east), so the output keeps the input's
//! spatial shape:
//!
//! `out[o, i, j] = b[o] + sum_{c, di, dj} w[o, c, di, dj] * x[c, i + di, j + dj]`
//!
//! with `x` read as zero outside the lattice.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::gemm::gemm;
use crate::nn::init::kaiming_normal;
use crate::nn::{Param, Tensor};
use crate::scalar::{pairwise_sum, Scalar};

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    /// `[out_ch, in_ch, kh, kw]`
    pub weight: Param<T>,
    /// `[out_ch]`
    pub bias: Param<T>,
    /// First layers have no upstream consumer for the input gradient.
    pub propagate_input_grad: bool,
    cache: Option<(Vec<T>, usize, usize)>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || bias.shape() != [s[0]] || s[2] == 0 || s[3] == 0 {
            return Err(Error::Shape(format!(
                "conv weight {:?} / bias {:?}",
                s,
                bias.shape()
            )));
        }
        Ok(Conv2d {
            out_ch: s[0],
            in_ch: s[1],
            kh: s[2],
            kw: s[3],
            weight: Param::new(weight),
            bias: Param::new(bias),
            propagate_input_grad: true,
            cache: None,
        })
    }

    /// Kaiming-normal kernels (fan-in `in_ch * kh * kw`) and zero bias.
    pub fn kaiming<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = kaiming_normal(in_ch * kh * kw, &[out_ch, in_ch, kh, kw], rng)?;
        Self::from_params(weight, Tensor::zeros(&[out_ch]))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.in_ch {
            return Err(Error::Shape(format!(
                "conv expects [{}, H, W] input, got {:?}",
                self.in_ch, s
            )));
        }
        Ok((s[1], s[2]))
    }

    /// Patch matrix `[in_ch * kh * kw, h * w]`: row `(c, di, dj)` holds
    /// `x[c, i + di, j + dj]` for every output position, zero past the edge.
    fn im2col(&self, xs: &[T], h: usize, w: usize) -> Vec<T> {
        let plane = h * w;
        let (kh, kw) = (self.kh, self.kw);
        let mut cols = vec![T::zero(); self.in_ch * kh * kw * plane];
        for c in 0..self.in_ch {
            let x_c = &xs[c * plane..(c + 1) * plane];
            for di in 0..kh.min(h) {
                for dj in 0..kw.min(w) {
                    let row = ((c * kh + di) * kw + dj) * plane;
                    let n = w - dj;
                    for i in 0..h - di {
                        cols[row + i * w..row + i * w + n]
                            .copy_from_slice(&x_c[(i + di) * w + dj..(i + di) * w + dj + n]);
                    }
                }
            }
        }
        cols
    }

    fn apply_cols(&self, cols: &[T], h: usize, w: usize) -> Result<Tensor<T>> {
        let plane = h * w;
        let mut out = vec![T::zero(); self.out_ch * plane];
        for (o, &b) in self.bias.value.as_slice().iter().enumerate() {
            out[o * plane..(o + 1) * plane].fill(b);
        }
        let ck = self.in_ch * self.kh * self.kw;
        gemm(self.out_ch, ck, plane, self.weight.value.as_slice(), false, cols, false, T::one(), &mut out);
        let y = Tensor::from_vec(&[self.out_ch, h, w], out)?;
        y.ensure_finite("conv2d output")?;
        Ok(y)
    }

    /// Forward pass without caching.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(x)?;
        self.apply_cols(&self.im2col(x.as_slice(), h, w), h, w)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(x)?;
        let cols = self.im2col(x.as_slice(), h, w);
        let y = self.apply_cols(&cols, h, w)?;
        self.cache = Some((cols, h, w));
        Ok(y)
    }

    /// Accumulates kernel and bias gradients and returns the input gradient
    /// (or `None` when `propagate_input_grad` is off).
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let (cols, h, w) = self.cache.as_ref().ok_or(Error::NoForwardCache("conv2d"))?;
        let (h, w) = (*h, *w);
        if grad_out.shape() != [self.out_ch, h, w] {
            return Err(Error::Shape(format!(
                "conv upstream gradient {:?}, expected [{}, {h}, {w}]",
                grad_out.shape(),
                self.out_ch
            )));
        }
        let plane = h * w;
        let (kh, kw) = (self.kh, self.kw);
        let ck = self.in_ch * kh * kw;
        let gs = grad_out.as_slice();
        for (o, gb) in self.bias.grad.as_mut_slice().iter_mut().enumerate() {
            *gb += pairwise_sum(&gs[o * plane..(o + 1) * plane]);
        }
        gemm(self.out_ch, plane, ck, gs, false, cols, true, T::one(), self.weight.grad.as_mut_slice());
        self.weight.grad.ensure_finite("conv2d kernel gradient")?;
        if !self.propagate_input_grad {
            return Ok(None);
        }
        let mut dcols = vec![T::zero(); ck * plane];
        gemm(ck, self.out_ch, plane, self.weight.value.as_slice(), true, gs, false, T::zero(), &mut dcols);
        let mut gx = vec![T::zero(); self.in_ch * plane];
        for c in 0..self.in_ch {
            let gx_c = &mut gx[c * plane..(c + 1) * plane];
            for di in 0..kh.min(h) {
                for dj in 0..kw.min(w) {
                    let row = ((c * kh + di) * kw + dj) * plane;
                    let n = w - dj;
                    for i in 0..h - di {
                        let dst = &mut gx_c[(i + di) * w + dj..(i + di) * w + dj + n];
                        for (d, &g) in dst.iter_mut().zip(&dcols[row + i * w..row + i * w + n]) {
                            *d += g;
                        }
                    }
                }
            }
        }
        let t = Tensor::from_vec(&[self.in_ch, h, w], gx)?;
        t.ensure_finite("conv2d input gradient")?;
        Ok(Some(t))
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}
