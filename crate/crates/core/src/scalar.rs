//! Floating-point abstraction shared by every numeric module.
//!
//! The crate is generic over [`Scalar`], implemented for `f32` and `f64`.
//! Everything that needs the error function goes through [`Scalar::erfc`],
//! which dispatches to `libm` for the concrete width.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by scoring, features and the network core.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Short type tag written into checkpoints.
    const NAME: &'static str;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Softplus of `xs` into `ys`, with `exp(-|x|)` into `es`.
    fn softplus_lanes(xs: &[Self], ys: &mut [Self], es: &mut [Self]);

    /// Strided `C = alpha * A B + beta * C` for an `m x k` by `k x n`
    /// product; `C` is not read when `beta` is zero.
    ///
    /// # Safety
    /// Every element addressed through the dimensions and strides must lie
    /// inside the allocations behind `a`, `b` and `c`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for finite literals in `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize to scalar")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn softplus_lanes(xs: &[Self], ys: &mut [Self], es: &mut [Self]) {
        crate::nn::simd::softplus_f32(xs, ys, es)
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn softplus_lanes(xs: &[Self], ys: &mut [Self], es: &mut [Self]) {
        crate::nn::simd::softplus_f64(xs, ys, es)
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * (-z / T::SQRT_2()).erfc()
}

/// Standard normal survival function `1 - Φ(z)`, accurate in the upper tail.
#[inline]
pub fn normal_sf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * (z / T::SQRT_2()).erfc()
}

/// Standard normal density.
#[inline]
pub fn normal_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::lit(0.5);
    inv_sqrt_2pi * (-(z * z) * T::lit(0.5)).exp()
}

/// Logistic sigmoid, the derivative of softplus.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so results are reproducible regardless of threading.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = T::zero();
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and unbiased (n-1) standard deviation. Returns a zero std for a
/// single value.
pub fn mean_std_unbiased<T: Scalar>(values: &[T]) -> (T, T) {
    let n = values.len();
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let mean = pairwise_sum(values) / T::from_usize_lossy(n);
    if n == 1 {
        return (mean, T::zero());
    }
    let mut ss = T::zero();
    for &v in values {
        let d = v - mean;
        ss += d * d;
    }
    (mean, (ss / T::from_usize_lossy(n - 1)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_and_pdf_reference_values() {
        assert!((normal_cdf(0.0_f64) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.644853626951472_f64) - 0.95).abs() < 1e-12);
        assert!((normal_pdf(0.0_f64) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((normal_cdf(1.0_f32) - 0.841_344_7).abs() < 1e-6);
    }

    #[test]
    fn survival_is_complement() {
        for &z in &[-3.0_f64, -0.2, 0.0, 1.5, 6.0] {
            assert!((normal_sf(z) + normal_cdf(z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn mean_std_of_zero_to_nineteen() {
        let v: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let (m, s) = mean_std_unbiased(&v);
        assert_eq!(m, 9.5);
        assert!((s - 35.0_f64.sqrt()).abs() < 1e-12);
    }
}
