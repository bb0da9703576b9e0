use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::DEFAULT_NOISE_SCALE;
use crate::error::{Error, Result};
use crate::features::DEFAULT_PASSED_RADIUS_KM;
use crate::scoring::WeightMode;

/// The model zoo: the raw-ensemble Gaussian, the per-grid FCN, and the four
/// CNN variants that differ in input channels and training-set composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "members")]
    Members,
    #[serde(rename = "fcn")]
    Fcn,
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "cnn-dyn")]
    CnnDyn,
    #[serde(rename = "cnn-aug")]
    CnnAug,
    #[serde(rename = "cnn-all")]
    CnnAll,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Members,
        Variant::Fcn,
        Variant::Cnn,
        Variant::CnnDyn,
        Variant::CnnAug,
        Variant::CnnAll,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Members => "members",
            Variant::Fcn => "fcn",
            Variant::Cnn => "cnn",
            Variant::CnnDyn => "cnn-dyn",
            Variant::CnnAug => "cnn-aug",
            Variant::CnnAll => "cnn-all",
        }
    }

    pub fn is_cnn(self) -> bool {
        matches!(
            self,
            Variant::Cnn | Variant::CnnDyn | Variant::CnnAug | Variant::CnnAll
        )
    }

    pub fn is_trainable(self) -> bool {
        self != Variant::Members
    }

    /// Geographic and dynamic inputs per the model summary table.
    pub fn default_geo_dyn(self) -> bool {
        matches!(self, Variant::CnnDyn | Variant::CnnAll)
    }

    pub fn default_augmentation(self) -> bool {
        matches!(self, Variant::CnnAug | Variant::CnnAll)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant {s:?}; expected one of members, fcn, cnn, cnn-dyn, cnn-aug, cnn-all"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub use_geo_dyn: bool,
    pub use_augmentation: bool,
    pub epochs: usize,
    pub lr: f64,
    /// Noise-injection scale relative to each member field's spread.
    pub eta: f64,
    pub seed: u64,
    pub weight_mode: WeightMode,
    /// Reports per optimizer step; 0 means the whole training set.
    pub batch_reports: usize,
    pub hidden_channels: usize,
    pub fcn_hidden: usize,
    pub passed_radius_km: f64,
}

impl ModelConfig {
    pub fn for_variant(variant: Variant, seed: u64) -> Self {
        ModelConfig {
            variant,
            use_geo_dyn: variant.default_geo_dyn(),
            use_augmentation: variant.default_augmentation(),
            epochs: 100,
            lr: 1e-3,
            eta: DEFAULT_NOISE_SCALE,
            seed,
            weight_mode: WeightMode::Doubling,
            batch_reports: 0,
            hidden_channels: 32,
            fcn_hidden: 16,
            passed_radius_km: DEFAULT_PASSED_RADIUS_KM,
        }
    }

    /// Checks the flags against the variant definition.
    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        if v.is_cnn() {
            if self.use_geo_dyn != v.default_geo_dyn()
                || self.use_augmentation != v.default_augmentation()
            {
                return Err(Error::InvalidArgument(format!(
                    "{v}: flags (geo/dyn={}, augmentation={}) contradict the variant",
                    self.use_geo_dyn, self.use_augmentation
                )));
            }
        } else if self.use_augmentation {
            return Err(Error::InvalidArgument(format!("{v} is trained without augmentation")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", self.lr)));
        }
        if self.eta.is_nan() || self.eta < 0.0 {
            return Err(Error::InvalidArgument(format!("eta {} must be >= 0", self.eta)));
        }
        if self.hidden_channels == 0 || self.fcn_hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        Ok(())
    }

    /// Seed used for a particular rolling-origin target.
    pub fn seed_for_target(&self, target: u32) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(u64::from(target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_flags() {
        let f = |v| {
            let c = ModelConfig::for_variant(v, 0);
            (c.use_geo_dyn, c.use_augmentation)
        };
        assert_eq!(f(Variant::Cnn), (false, false));
        assert_eq!(f(Variant::CnnDyn), (true, false));
        assert_eq!(f(Variant::CnnAug), (false, true));
        assert_eq!(f(Variant::CnnAll), (true, true));
        assert_eq!(f(Variant::Fcn), (false, false));
        for v in Variant::ALL {
            ModelConfig::for_variant(v, 0).validate().unwrap();
        }
    }

    #[test]
    fn inconsistent_flags_rejected() {
        let mut c = ModelConfig::for_variant(Variant::Cnn, 0);
        c.use_augmentation = true;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::for_variant(Variant::Fcn, 0);
        c.use_augmentation = true;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parse_labels() {
        for v in Variant::ALL {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("CNN-ALL".parse::<Variant>().unwrap(), Variant::CnnAll);
        assert!("rnn".parse::<Variant>().is_err());
    }
}
