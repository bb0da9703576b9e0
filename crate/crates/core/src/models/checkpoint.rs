//! JSON checkpoints: layer shapes plus row-major values. Every value is
//! stored as an `f64`, which holds both `f32` and `f64` weights exactly,
//! so a save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NormStats;
use crate::models::{CnnNet, FcnNet, GaussianHead, ModelConfig, Network, TrainedModel, TrainingSummary};
use crate::nn::{Conv2d, Dense, Tensor};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "cyclone-pp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub weight: ArrayRecord,
    pub bias: ArrayRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Cnn,
    Fcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub kind: NetworkKind,
    pub config: ModelConfig,
    pub summary: TrainingSummary,
    pub layers: Vec<LayerRecord>,
    pub norm: NormStats<f64>,
    pub head: GaussianHead<f64>,
}

fn record<T: Scalar>(t: &Tensor<T>) -> ArrayRecord {
    ArrayRecord {
        shape: t.shape().to_vec(),
        values: t.as_slice().iter().map(|v| v.as_f64()).collect(),
    }
}

fn tensor<T: Scalar>(r: &ArrayRecord) -> Result<Tensor<T>> {
    if r.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("checkpoint weights".into()));
    }
    Tensor::from_vec(&r.shape, r.values.iter().map(|&v| T::lit(v)).collect())
}

fn layer<T: Scalar>(name: &str, weight: &Tensor<T>, bias: &Tensor<T>) -> LayerRecord {
    LayerRecord {
        name: name.to_string(),
        weight: record(weight),
        bias: record(bias),
    }
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &TrainedModel<T>) -> Self {
        let (kind, layers, norm, head) = match &model.network {
            Network::Cnn(n) => (
                NetworkKind::Cnn,
                vec![
                    layer("conv1", &n.conv1.weight.value, &n.conv1.bias.value),
                    layer("conv2", &n.conv2.weight.value, &n.conv2.bias.value),
                ],
                n.norm.cast(),
                n.head.cast(),
            ),
            Network::Fcn(n) => (
                NetworkKind::Fcn,
                vec![
                    layer("dense1", &n.dense1.weight.value, &n.dense1.bias.value),
                    layer("dense2", &n.dense2.weight.value, &n.dense2.bias.value),
                ],
                n.norm.cast(),
                n.head.cast(),
            ),
        };
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            scalar: T::NAME.to_string(),
            kind,
            config: model.config.clone(),
            summary: model.summary.clone(),
            layers,
            norm,
            head,
        }
    }

    pub fn into_model<T: Scalar>(&self) -> Result<TrainedModel<T>> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.layers.len() != 2 {
            return Err(Error::Shape(format!("expected 2 layers, found {}", self.layers.len())));
        }
        let norm = self.norm.cast::<T>();
        let head = self.head.cast::<T>();
        let (l1, l2) = (&self.layers[0], &self.layers[1]);
        let network = match self.kind {
            NetworkKind::Cnn => {
                let c1 = Conv2d::from_params(tensor(&l1.weight)?, tensor(&l1.bias)?)?;
                let c2 = Conv2d::from_params(tensor(&l2.weight)?, tensor(&l2.bias)?)?;
                if c1.out_ch != c2.in_ch || c2.out_ch != 2 || norm.n_channels() != c1.in_ch {
                    return Err(Error::Shape("inconsistent CNN checkpoint layers".into()));
                }
                Network::Cnn(CnnNet::from_parts(c1, c2, norm, head))
            }
            NetworkKind::Fcn => {
                let d1 = Dense::from_params(tensor(&l1.weight)?, tensor(&l1.bias)?)?;
                let d2 = Dense::from_params(tensor(&l2.weight)?, tensor(&l2.bias)?)?;
                let geo = self.config.use_geo_dyn;
                if d1.n_out != d2.n_in
                    || d2.n_out != 2
                    || d1.n_in != super::fcn_input_width(geo)
                    || norm.n_channels() != d1.n_in
                {
                    return Err(Error::Shape("inconsistent FCN checkpoint layers".into()));
                }
                Network::Fcn(FcnNet::from_parts(d1, d2, norm, head, geo))
            }
        };
        Ok(TrainedModel {
            config: self.config.clone(),
            network,
            summary: self.summary.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}
