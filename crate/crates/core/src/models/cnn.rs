use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{apply_standardizer, FeatureStack, NormStats};
use crate::models::head::GaussianHead;
use crate::models::HeadNet;
use crate::nn::{Conv2d, Param, Softplus, Tensor};
use crate::scalar::Scalar;

/// `n_inputs -> hidden` 2x2 convolution, softplus, then a 1x1 convolution to
/// the two raw output maps.
#[derive(Debug, Clone)]
pub struct CnnNet<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub norm: NormStats<T>,
    pub head: GaussianHead<T>,
    act: Softplus<T>,
    spatial: Option<(usize, usize)>,
}

impl<T: Scalar> CnnNet<T> {
    pub fn new<R: Rng + ?Sized>(
        n_inputs: usize,
        hidden: usize,
        norm: NormStats<T>,
        head: GaussianHead<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut conv1 = Conv2d::kaiming(n_inputs, hidden, 2, 2, rng)?;
        conv1.propagate_input_grad = false;
        let conv2 = Conv2d::kaiming(hidden, 2, 1, 1, rng)?;
        Ok(Self::from_parts(conv1, conv2, norm, head))
    }

    pub fn from_parts(
        mut conv1: Conv2d<T>,
        conv2: Conv2d<T>,
        norm: NormStats<T>,
        head: GaussianHead<T>,
    ) -> Self {
        conv1.propagate_input_grad = false;
        CnnNet {
            conv1,
            conv2,
            norm,
            head,
            act: Softplus::new(),
            spatial: None,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.conv1.in_ch
    }

    /// Keeps the leading input channels and standardizes them.
    pub fn input_tensor(&self, stack: &FeatureStack<T>) -> Result<Tensor<T>> {
        let z = apply_standardizer(&stack.truncated(self.n_inputs())?, &self.norm)?;
        Tensor::from_vec(&[z.n_channels(), z.rows(), z.cols()], z.as_slice().to_vec())
    }

    fn split(out: Tensor<T>) -> (Vec<T>, Vec<T>) {
        let mut a = out.into_vec();
        let b = a.split_off(a.len() / 2);
        (a, b)
    }
}

impl<T: Scalar> HeadNet<T> for CnnNet<T> {
    fn head(&self) -> &GaussianHead<T> {
        &self.head
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        let h = self.conv1.forward(x)?;
        self.spatial = Some((h.shape()[1], h.shape()[2]));
        let h = self.act.forward(&h)?;
        Ok(Self::split(self.conv2.forward(&h)?))
    }

    fn evaluate(&self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        let h = Softplus::apply(&self.conv1.apply(x)?)?;
        Ok(Self::split(self.conv2.apply(&h)?))
    }

    fn backward(&mut self, mut grad_a: Vec<T>, grad_b: Vec<T>) -> Result<()> {
        let (h, w) = self.spatial.ok_or(Error::NoForwardCache("cnn"))?;
        grad_a.extend(grad_b);
        let g = Tensor::from_vec(&[2, h, w], grad_a)?;
        let gh = self.conv2.backward(&g)?.expect("conv2 propagates");
        let gh = self.act.backward(&gh)?;
        self.conv1.backward(&gh)?;
        Ok(())
    }

    fn params(&mut self) -> Vec<&mut Param<T>> {
        let [w1, b1] = self.conv1.params_mut();
        let [w2, b2] = self.conv2.params_mut();
        vec![w1, b1, w2, b2]
    }

    fn zero_grad(&mut self) {
        self.conv1.zero_grad();
        self.conv2.zero_grad();
    }
}

