//! Continuous ranked probability score for Gaussian forecasts: closed form,
//! an integral-definition quadrature oracle, analytic gradients, the
//! temporally weighted training loss, and the skill score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::report::{Report, ReportIndex};
use crate::scalar::{normal_cdf, normal_pdf, normal_sf, pairwise_sum, Scalar};

/// Lower bound on the reference ensemble spread, mm.
pub const REFERENCE_SIGMA_FLOOR: f64 = 1e-6;

/// Per-cell Gaussian predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField<T> {
    pub mu: Field<T>,
    pub sigma: Field<T>,
}

impl<T: Scalar> GaussianField<T> {
    pub fn new(mu: Field<T>, sigma: Field<T>) -> Result<Self> {
        if !mu.same_shape(&sigma) {
            return Err(Error::Shape("mu and sigma fields differ in shape".into()));
        }
        if mu.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forecast mean".into()));
        }
        if sigma.as_slice().iter().any(|&s| !(s.is_finite() && s > T::zero())) {
            return Err(Error::Domain("forecast sigma must be finite and > 0".into()));
        }
        Ok(GaussianField { mu, sigma })
    }

    pub fn rows(&self) -> usize {
        self.mu.rows()
    }

    pub fn cols(&self) -> usize {
        self.mu.cols()
    }

    pub fn cast<U: Scalar>(&self) -> GaussianField<U> {
        GaussianField {
            mu: self.mu.cast(),
            sigma: self.sigma.cast(),
        }
    }

    /// Per-cell CRPS against an observation field.
    pub fn crps_field(&self, obs: &Field<T>) -> Result<Field<T>> {
        if !self.mu.same_shape(obs) {
            return Err(Error::Shape("observation and forecast differ in shape".into()));
        }
        let data = self
            .mu
            .as_slice()
            .iter()
            .zip(self.sigma.as_slice())
            .zip(obs.as_slice())
            .map(|((&m, &s), &y)| crps_unchecked(m, s, y))
            .collect();
        Field::from_vec(obs.rows(), obs.cols(), data)
    }
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<()> {
    if sigma > T::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma {sigma} must be finite and > 0")))
    }
}

/// Closed form without argument checks; `sigma` must be positive.
#[inline]
pub fn crps_unchecked<T: Scalar>(mu: T, sigma: T, y: T) -> T {
    let z = (y - mu) / sigma;
    let two = T::lit(2.0);
    let inv_sqrt_pi = T::FRAC_2_SQRT_PI() * T::lit(0.5);
    sigma * (z * (two * normal_cdf(z) - T::one()) + two * normal_pdf(z) - inv_sqrt_pi)
}

/// `sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi))` with `z = (y - mu) / sigma`.
pub fn crps_gaussian<T: Scalar>(mu: T, sigma: T, y: T) -> Result<T> {
    check_sigma(sigma)?;
    if !(mu.is_finite() && y.is_finite()) {
        return Err(Error::Domain("mu and y must be finite".into()));
    }
    Ok(crps_unchecked(mu, sigma, y))
}

/// `(dCRPS/dmu, dCRPS/dsigma)` without argument checks.
#[inline]
pub fn crps_gradient_unchecked<T: Scalar>(mu: T, sigma: T, y: T) -> (T, T) {
    let z = (y - mu) / sigma;
    let two = T::lit(2.0);
    let inv_sqrt_pi = T::FRAC_2_SQRT_PI() * T::lit(0.5);
    (
        T::one() - two * normal_cdf(z),
        two * normal_pdf(z) - inv_sqrt_pi,
    )
}

pub fn crps_gradient<T: Scalar>(mu: T, sigma: T, y: T) -> Result<(T, T)> {
    check_sigma(sigma)?;
    Ok(crps_gradient_unchecked(mu, sigma, y))
}

/// Composite Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panel: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(20);
    let panels = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            acc += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * acc;
    }
    total
}

/// Numerical evaluation of `integral (F(q) - 1{q >= y})^2 dq` for a Gaussian
/// `F`, split at `y` and truncated at 12 sigma beyond the bulk.
pub fn crps_quadrature_oracle<T: Scalar>(mu: T, sigma: T, y: T) -> Result<T> {
    check_sigma(sigma)?;
    let (mu, sigma, y) = (mu.as_f64(), sigma.as_f64(), y.as_f64());
    let lo = (mu - 12.0 * sigma).min(y);
    let hi = (mu + 12.0 * sigma).max(y);
    let panel = sigma / 4.0;
    let below = integrate(
        |q| {
            let f = normal_cdf((q - mu) / sigma);
            f * f
        },
        lo,
        y,
        panel,
    );
    let above = integrate(
        |q| {
            let s = normal_sf((q - mu) / sigma);
            s * s
        },
        y,
        hi,
        panel,
    );
    Ok(T::lit(below + above))
}

/// How training reports are weighted in the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Weight doubles with each more recent original report.
    #[default]
    Doubling,
    Equal,
}

/// Normalized per-report weights, aligned with a list of training reports.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme<T> {
    pub entries: Vec<(ReportIndex, T)>,
}

impl<T: Scalar> WeightScheme<T> {
    pub fn weights(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn uniform(indices: &[ReportIndex]) -> Self {
        let w = T::one() / T::from_usize_lossy(indices.len().max(1));
        WeightScheme {
            entries: indices.iter().map(|&i| (i, w)).collect(),
        }
    }

    pub fn for_mode(mode: WeightMode, indices: &[ReportIndex]) -> Self {
        match mode {
            WeightMode::Doubling => make_weights(indices),
            WeightMode::Equal => Self::uniform(indices),
        }
    }
}

/// Recency weights: the original report `j` steps after the oldest one gets
/// raw weight `2^j`; midpoints and noise copies inherit the weight of the
/// original at or below their index. Weights are normalized to sum to one.
pub fn make_weights<T: Scalar>(indices: &[ReportIndex]) -> WeightScheme<T> {
    let Some(oldest) = indices.iter().map(|i| i.floor()).min() else {
        return WeightScheme { entries: vec![] };
    };
    let raw: Vec<T> = indices
        .iter()
        .map(|i| T::lit(2.0).powi((i.floor() - oldest) as i32))
        .collect();
    let total = pairwise_sum(&raw);
    WeightScheme {
        entries: indices
            .iter()
            .zip(raw)
            .map(|(&i, w)| (i, w / total))
            .collect(),
    }
}

/// Masked mean CRPS of one forecast field against an observation.
pub fn masked_mean_crps<T: Scalar>(
    prediction: &GaussianField<T>,
    obs: &Field<T>,
    mask: &[bool],
) -> Result<T> {
    if mask.len() != obs.len() || !prediction.mu.same_shape(obs) {
        return Err(Error::Shape("mask, forecast and observation must align".into()));
    }
    let scores: Vec<T> = (0..obs.len())
        .filter(|&i| mask[i])
        .map(|i| {
            crps_unchecked(
                prediction.mu.as_slice()[i],
                prediction.sigma.as_slice()[i],
                obs.as_slice()[i],
            )
        })
        .collect();
    if scores.is_empty() {
        return Err(Error::InvalidArgument("mask selects no cells".into()));
    }
    Ok(pairwise_sum(&scores) / T::from_usize_lossy(scores.len()))
}

/// `sum_r w_r * mean_{masked cells} CRPS(prediction_r, observation_r)`.
pub fn weighted_loss<T: Scalar>(
    predictions: &[GaussianField<T>],
    reports: &[Report<T>],
    weights: &WeightScheme<T>,
    mask: &[bool],
) -> Result<T> {
    if predictions.len() != reports.len() || weights.len() != reports.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} reports, {} weights",
            predictions.len(),
            reports.len(),
            weights.len()
        )));
    }
    let mut terms = Vec::with_capacity(reports.len());
    for ((pred, report), (idx, w)) in predictions.iter().zip(reports).zip(&weights.entries) {
        if *idx != report.index {
            return Err(Error::Shape(format!(
                "weight for report {idx} aligned with report {}",
                report.index
            )));
        }
        terms.push(*w * masked_mean_crps(pred, report.observation()?, mask)?);
    }
    let loss = pairwise_sum(&terms);
    if !loss.is_finite() {
        return Err(Error::NonFinite("weighted loss".into()));
    }
    Ok(loss)
}

/// `1 - model / reference` per cell; `None` where the reference score is 0.
pub fn crpss<T: Scalar>(model: &[T], reference: &[T]) -> Result<Vec<Option<T>>> {
    if model.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} model scores vs {} reference scores",
            model.len(),
            reference.len()
        )));
    }
    Ok(model
        .iter()
        .zip(reference)
        .map(|(&m, &r)| (r > T::zero()).then(|| T::one() - m / r))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_reference_values() {
        // frozen from an independent adaptive quadrature (scipy.integrate.quad)
        let c = crps_gaussian(0.0, 1.0, 0.0_f64).unwrap();
        assert!((c - 0.233_694_977_255).abs() < 1e-6, "{c}");
        let c = crps_gaussian(0.0, 1.0, 10.0_f64).unwrap();
        assert!((c - 9.435_810_416_452).abs() < 1e-9, "{c}");
        let c = crps_gaussian(0.0, 1e-8, 7.0_f64).unwrap();
        assert!((c - 7.0).abs() < 1e-7);
    }

    #[test]
    fn oracle_reference_values() {
        let c = crps_quadrature_oracle(0.0, 1.0, 0.0_f64).unwrap();
        assert!((c - 0.233_694_977_255).abs() < 1e-9, "{c}");
        let c = crps_quadrature_oracle(0.0, 1.0, 10.0_f64).unwrap();
        assert!((c - 9.435_810_416_452).abs() < 1e-9, "{c}");
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(crps_gaussian(0.0, 0.0, 1.0_f64).is_err());
        assert!(crps_gaussian(0.0, -1.0, 1.0_f64).is_err());
        assert!(crps_gradient(0.0, 0.0, 1.0_f64).is_err());
        assert!(crps_quadrature_oracle(0.0, 0.0, 1.0_f64).is_err());
    }

    #[test]
    fn gradient_at_median() {
        let (dmu, dsigma) = crps_gradient(3.0, 2.0, 3.0_f64).unwrap();
        assert_eq!(dmu, 0.0);
        let (_, dsigma0) = crps_gradient(0.0, 1.0, 0.0_f64).unwrap();
        assert!((dsigma0 - 0.233_694_977_255).abs() < 1e-9);
        assert!((dsigma - dsigma0).abs() < 1e-15);
    }

    #[test]
    fn weights_paper_ratios() {
        let idx: Vec<_> = (1..=3).map(ReportIndex::integer).collect();
        let w = make_weights::<f64>(&idx).weights();
        assert_eq!(w, vec![1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]);

        let idx: Vec<_> = (2..8).map(ReportIndex::from_halves).collect();
        let w = make_weights::<f64>(&idx).weights();
        let ratio: Vec<f64> = w.iter().map(|x| x / w[0]).collect();
        assert_eq!(ratio, vec![1.0, 1.0, 2.0, 2.0, 4.0, 4.0]);

        let w = make_weights::<f64>(&[ReportIndex::integer(4)]).weights();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn skill_score_bounds() {
        let s = crpss(&[1.0, 0.0, 4.0, 1.0], &[1.0, 3.0, 2.0, 0.0]).unwrap();
        assert_eq!(s, vec![Some(0.0), Some(1.0), Some(-1.0), None]);
        assert!(crpss(&[1.0], &[1.0, 2.0]).is_err());
    }
}
