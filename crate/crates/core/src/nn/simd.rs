//! Lane-parallel softplus kernels.
//!
//! Each element gets `e = exp(-|x|)` and `softplus(x) = max(x, 0) + ln1p(e)`,
//! with `ln1p` evaluated as `ln(u) * e / (u - 1)`, `u = 1 + e`, which stays
//! accurate for tiny `e`. Inputs above 30 pass through unchanged, as in
//! the scalar [`softplus`](super::softplus). `e` is returned so the
//! derivative needs no second exponential.

use wide::{f32x8, f64x4};

macro_rules! softplus_kernel {
    ($name:ident, $t:ty, $v:ty, $lanes:expr) => {
        pub(crate) fn $name(xs: &[$t], ys: &mut [$t], es: &mut [$t]) {
            assert!(ys.len() == xs.len() && es.len() == xs.len());
            let split = xs.len() - xs.len() % $lanes;
            let big = <$v>::splat(30.0);
            for ((x, y), e) in xs[..split]
                .chunks_exact($lanes)
                .zip(ys[..split].chunks_exact_mut($lanes))
                .zip(es[..split].chunks_exact_mut($lanes))
            {
                let xv = <$v>::from(<[$t; $lanes]>::try_from(x).expect("lane chunk"));
                let ev = (-xv.abs()).exp();
                let u = ev + <$v>::ONE;
                let d = u - <$v>::ONE;
                let tiny = d.simd_eq(<$v>::ZERO);
                let l1p = tiny.select(ev, u.ln() * ev / tiny.select(<$v>::ONE, d));
                let sp = xv.max(<$v>::ZERO) + l1p;
                y.copy_from_slice(&xv.simd_gt(big).select(xv, sp).to_array());
                e.copy_from_slice(&ev.to_array());
            }
            for ((&x, y), e) in xs[split..].iter().zip(&mut ys[split..]).zip(&mut es[split..]) {
                let ev = (-x.abs()).exp();
                *e = ev;
                *y = if x > 30.0 { x } else { x.max(0.0) + ev.ln_1p() };
            }
        }
    };
}

softplus_kernel!(softplus_f64, f64, f64x4, 4);
softplus_kernel!(softplus_f32, f32, f32x8, 8);
