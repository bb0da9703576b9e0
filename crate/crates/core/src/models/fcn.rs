use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureStack, NormStats, CH_ALTITUDE, CH_PASSED};
use crate::models::head::GaussianHead;
use crate::models::HeadNet;
use crate::nn::{Dense, Param, Softplus, Tensor};
use crate::report::N_MEMBERS;
use crate::scalar::{mean_std_unbiased, pairwise_sum, Scalar};

/// Per-cell inputs: ensemble mean and spread, optionally followed by
/// lon, lat, altitude, cyclone distance and the passed flag.
pub fn fcn_input_width(use_geo_dyn: bool) -> usize {
    if use_geo_dyn {
        2 + (CH_PASSED - CH_ALTITUDE + 3)
    } else {
        2
    }
}

/// Row-major `[cells.len(), width]` matrix of raw per-cell predictors.
pub fn fcn_features<T: Scalar>(
    stack: &FeatureStack<T>,
    cells: &[usize],
    use_geo_dyn: bool,
) -> Result<Vec<T>> {
    let width = fcn_input_width(use_geo_dyn);
    let needed = if use_geo_dyn { CH_PASSED + 1 } else { N_MEMBERS };
    if stack.n_channels() < needed {
        return Err(Error::Shape(format!(
            "FCN needs {needed} channels, stack has {}",
            stack.n_channels()
        )));
    }
    let mut out = Vec::with_capacity(cells.len() * width);
    let mut ens = Vec::with_capacity(N_MEMBERS);
    for &i in cells {
        ens.clear();
        ens.extend((0..N_MEMBERS).map(|m| stack.channel(m)[i]));
        let (mean, sd) = mean_std_unbiased(&ens);
        out.push(mean);
        out.push(sd);
        if use_geo_dyn {
            for c in N_MEMBERS..=CH_PASSED {
                out.push(stack.channel(c)[i]);
            }
        }
    }
    Ok(out)
}

/// Column-wise z-score statistics of a row-major matrix; constant columns
/// map to `(0, 1)`.
pub fn fit_columns<T: Scalar>(matrix: &[T], width: usize) -> NormStats<T> {
    let mut mean = Vec::with_capacity(width);
    let mut std = Vec::with_capacity(width);
    for c in 0..width {
        let col: Vec<T> = matrix.iter().skip(c).step_by(width).copied().collect();
        let n = T::from_usize_lossy(col.len().max(1));
        let m = pairwise_sum(&col) / n;
        let sq: Vec<T> = col.iter().map(|&v| (v - m) * (v - m)).collect();
        let s = (pairwise_sum(&sq) / n).sqrt();
        if s > T::lit(1e-9) * m.abs().max(T::one()) {
            mean.push(m);
            std.push(s);
        } else {
            mean.push(T::zero());
            std.push(T::one());
        }
    }
    NormStats { mean, std }
}

/// Per-grid network: one softplus hidden layer, two raw outputs per cell.
#[derive(Debug, Clone)]
pub struct FcnNet<T> {
    pub dense1: Dense<T>,
    pub dense2: Dense<T>,
    pub norm: NormStats<T>,
    pub head: GaussianHead<T>,
    pub use_geo_dyn: bool,
    act: Softplus<T>,
    batch: Option<usize>,
}

impl<T: Scalar> FcnNet<T> {
    pub fn new<R: Rng + ?Sized>(
        use_geo_dyn: bool,
        hidden: usize,
        norm: NormStats<T>,
        head: GaussianHead<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let dense1 = Dense::kaiming(fcn_input_width(use_geo_dyn), hidden, rng)?;
        let dense2 = Dense::kaiming(hidden, 2, rng)?;
        Ok(Self::from_parts(dense1, dense2, norm, head, use_geo_dyn))
    }

    pub fn from_parts(
        mut dense1: Dense<T>,
        dense2: Dense<T>,
        norm: NormStats<T>,
        head: GaussianHead<T>,
        use_geo_dyn: bool,
    ) -> Self {
        dense1.propagate_input_grad = false;
        FcnNet {
            dense1,
            dense2,
            norm,
            head,
            use_geo_dyn,
            act: Softplus::new(),
            batch: None,
        }
    }

    /// Standardized `[cells, width]` input for the given cells of a stack.
    pub fn input_tensor(&self, stack: &FeatureStack<T>, cells: &[usize]) -> Result<Tensor<T>> {
        let width = fcn_input_width(self.use_geo_dyn);
        let mut x = fcn_features(stack, cells, self.use_geo_dyn)?;
        for row in x.chunks_mut(width) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.norm.mean[c]) / self.norm.std[c];
            }
        }
        Tensor::from_vec(&[cells.len(), width], x)
    }

    fn split(out: Tensor<T>) -> (Vec<T>, Vec<T>) {
        let v = out.into_vec();
        (
            v.iter().step_by(2).copied().collect(),
            v.iter().skip(1).step_by(2).copied().collect(),
        )
    }
}

impl<T: Scalar> HeadNet<T> for FcnNet<T> {
    fn head(&self) -> &GaussianHead<T> {
        &self.head
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        self.batch = Some(x.shape()[0]);
        let h = self.dense1.forward(x)?;
        let h = self.act.forward(&h)?;
        Ok(Self::split(self.dense2.forward(&h)?))
    }

    fn evaluate(&self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        let h = Softplus::apply(&self.dense1.apply(x)?)?;
        Ok(Self::split(self.dense2.apply(&h)?))
    }

    fn backward(&mut self, grad_a: Vec<T>, grad_b: Vec<T>) -> Result<()> {
        let n = self.batch.ok_or(Error::NoForwardCache("fcn"))?;
        let mut g = Vec::with_capacity(2 * n);
        for (a, b) in grad_a.into_iter().zip(grad_b) {
            g.push(a);
            g.push(b);
        }
        let g = Tensor::from_vec(&[n, 2], g)?;
        let gh = self.dense2.backward(&g)?.expect("dense2 propagates");
        let gh = self.act.backward(&gh)?;
        self.dense1.backward(&gh)?;
        Ok(())
    }

    fn params(&mut self) -> Vec<&mut Param<T>> {
        let [w1, b1] = self.dense1.params_mut();
        let [w2, b2] = self.dense2.params_mut();
        vec![w1, b1, w2, b2]
    }

    fn zero_grad(&mut self) {
        self.dense1.zero_grad();
        self.dense2.zero_grad();
    }
}
