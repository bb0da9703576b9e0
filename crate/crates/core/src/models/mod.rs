//! Table 1 model zoo and the rolling-origin protocol.

pub mod checkpoint;
mod cnn;
mod config;
mod fcn;
mod head;
mod members;
mod rolling;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::augment_run;
use crate::error::{Error, Result};
use crate::features::{assemble_stack, fit_standardizer, FeatureStack, N_CHANNELS};
use crate::grid::{GridDomain, LatLon};
use crate::nn::{Adam, AdamConfig, Param, Tensor};
use crate::report::{cmp_reports, Origin, Report, N_MEMBERS};
use crate::scalar::{pairwise_sum, Scalar};
use crate::scoring::{GaussianField, WeightScheme};

pub use cnn::CnnNet;
pub use config::{ModelConfig, Variant};
pub use fcn::{fcn_features, fcn_input_width, fit_columns, FcnNet};
pub use head::{GaussianHead, SIGMA_FLOOR_MM};
pub use members::predict_members_baseline;
pub use rolling::{rolling_origin_run, RollingOutput, VariantPrediction};

/// A network that emits raw `(a, b)` outputs interpreted by a Gaussian head.
pub(crate) trait HeadNet<T: Scalar> {
    fn head(&self) -> &GaussianHead<T>;
    fn forward(&mut self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)>;
    fn evaluate(&self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)>;
    fn backward(&mut self, grad_a: Vec<T>, grad_b: Vec<T>) -> Result<()>;
    fn params(&mut self) -> Vec<&mut Param<T>>;
    fn zero_grad(&mut self);
}

#[derive(Debug, Clone)]
pub enum Network<T> {
    Cnn(CnnNet<T>),
    Fcn(FcnNet<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_reports: usize,
    pub epochs: usize,
    pub steps: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub config: ModelConfig,
    pub network: Network<T>,
    pub summary: TrainingSummary,
}

/// Cyclone centres of `reports` with index at or below each report's own,
/// one per distinct index, in time order.
pub fn track_through<T: Scalar>(reports: &[Report<T>], upto: usize) -> Vec<LatLon> {
    let limit = reports[upto].index;
    let mut out: Vec<(crate::report::ReportIndex, LatLon)> = Vec::new();
    for r in reports.iter().filter(|r| r.index <= limit) {
        if !out.iter().any(|(i, _)| *i == r.index) {
            out.push((r.index, r.tc_center));
        }
    }
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, c)| c).collect()
}

/// One training report after feature assembly: network input, the target
/// at every output position, and its loss weight.
struct Sample<T> {
    x: Tensor<T>,
    obs: Vec<T>,
    weight: T,
}

fn input_channels(config: &ModelConfig) -> usize {
    if config.use_geo_dyn {
        N_CHANNELS
    } else {
        N_MEMBERS
    }
}

/// Training reports for `config`: the history itself, or its augmented
/// expansion.
pub fn training_reports<T: Scalar>(config: &ModelConfig, history: &[Report<T>]) -> Result<Vec<Report<T>>> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("empty training history".into()));
    }
    let mut originals: Vec<Report<T>> = history
        .iter()
        .filter(|r| r.origin == Origin::Original)
        .cloned()
        .collect();
    if originals.len() != history.len() {
        return Err(Error::InvalidArgument("training history must hold original reports".into()));
    }
    originals.sort_by(cmp_reports);
    if config.use_augmentation {
        Ok(augment_run(&originals, config.eta, config.seed)?.reports)
    } else {
        Ok(originals)
    }
}

fn stacks_for<T: Scalar>(
    reports: &[Report<T>],
    domain: &GridDomain,
    passed_radius_km: f64,
    n_inputs: usize,
) -> Result<Vec<FeatureStack<T>>> {
    (0..reports.len())
        .map(|i| {
            let track = track_through(reports, i);
            assemble_stack(&reports[i], domain, &track, passed_radius_km)?.truncated(n_inputs)
        })
        .collect()
}

/// Weighted mean-CRPS loss of `net` over `samples` (no caches touched).
fn evaluate_loss<T: Scalar, N: HeadNet<T>>(net: &N, samples: &[Sample<T>], cells: &[usize]) -> Result<T> {
    let mut terms = Vec::with_capacity(samples.len());
    for s in samples {
        let (a, b) = net.evaluate(&s.x)?;
        let mut ga = vec![T::zero(); a.len()];
        let mut gb = vec![T::zero(); b.len()];
        terms.push(net.head().loss_and_grad(&a, &b, cells, |i| s.obs[i], s.weight, &mut ga, &mut gb));
    }
    let loss = pairwise_sum(&terms);
    if !loss.is_finite() {
        return Err(Error::NonFinite("weighted training loss".into()));
    }
    Ok(loss)
}

fn fit<T: Scalar, N: HeadNet<T>>(
    net: &mut N,
    samples: &[Sample<T>],
    cells: &[usize],
    config: &ModelConfig,
) -> Result<TrainingSummary> {
    let diverged = |e: Error| match e {
        Error::NonFinite(what) => Error::NonFinite(format!(
            "training of {} diverged ({what}); try a smaller learning rate",
            config.variant
        )),
        other => other,
    };
    let initial = evaluate_loss(net, samples, cells).map_err(diverged)?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let batch = if config.batch_reports == 0 {
        samples.len()
    } else {
        config.batch_reports
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            net.zero_grad();
            for &s in chunk {
                let sample = &samples[s];
                let (a, b) = net.forward(&sample.x)?;
                let mut ga = vec![T::zero(); a.len()];
                let mut gb = vec![T::zero(); b.len()];
                let head = *net.head();
                head.loss_and_grad(&a, &b, cells, |i| sample.obs[i], sample.weight, &mut ga, &mut gb);
                net.backward(ga, gb).map_err(diverged)?;
            }
            adam.step(&mut net.params()).map_err(diverged)?;
        }
    }
    let final_loss = evaluate_loss(net, samples, cells).map_err(diverged)?;
    Ok(TrainingSummary {
        n_reports: samples.len(),
        epochs: config.epochs,
        steps: u64::from(adam.steps_taken()),
        initial_loss: initial.as_f64(),
        final_loss: final_loss.as_f64(),
    })
}

/// Trains one Table 1 network on reports preceding the target. `history`
/// holds original reports only; augmentation, if configured, is applied
/// to them here.
pub fn train_model<T: Scalar>(
    config: &ModelConfig,
    history: &[Report<T>],
    domain: &GridDomain,
) -> Result<TrainedModel<T>> {
    config.validate()?;
    if !config.variant.is_trainable() {
        return Err(Error::InvalidArgument(format!(
            "{} is a fixed baseline and is not trained",
            config.variant
        )));
    }
    let reports = training_reports(config, history)?;
    let land = domain.land_cells();
    if land.is_empty() {
        return Err(Error::InvalidArgument("domain has no land cells".into()));
    }
    let head = GaussianHead::fit(&reports, &land)?;
    let indices: Vec<_> = reports.iter().map(|r| r.index).collect();
    let weights = WeightScheme::<T>::for_mode(config.weight_mode, &indices).weights();
    let n_inputs = input_channels(config);
    let stacks = stacks_for(&reports, domain, config.passed_radius_km, n_inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (network, summary) = if config.variant.is_cnn() {
        let norm = fit_standardizer(&stacks)?;
        let mut net = CnnNet::new(n_inputs, config.hidden_channels, norm, head, &mut rng)?;
        let mut samples = Vec::with_capacity(reports.len());
        for ((r, s), &w) in reports.iter().zip(&stacks).zip(&weights) {
            samples.push(Sample {
                x: net.input_tensor(s)?,
                obs: r.observation()?.as_slice().to_vec(),
                weight: w,
            });
        }
        let summary = fit(&mut net, &samples, &land, config)?;
        (Network::Cnn(net), summary)
    } else {
        let width = fcn_input_width(config.use_geo_dyn);
        let mut all = Vec::new();
        for s in &stacks {
            all.extend(fcn_features(s, &land, config.use_geo_dyn)?);
        }
        let norm = fit_columns(&all, width);
        let mut net = FcnNet::new(config.use_geo_dyn, config.fcn_hidden, norm, head, &mut rng)?;
        let mut samples = Vec::with_capacity(reports.len());
        for ((r, s), &w) in reports.iter().zip(&stacks).zip(&weights) {
            let obs = r.observation()?.as_slice();
            samples.push(Sample {
                x: net.input_tensor(s, &land)?,
                obs: land.iter().map(|&i| obs[i]).collect(),
                weight: w,
            });
        }
        let positions: Vec<usize> = (0..land.len()).collect();
        let summary = fit(&mut net, &samples, &positions, config)?;
        (Network::Fcn(net), summary)
    };
    log::debug!(
        "{}: {} reports, loss {:.4} -> {:.4}",
        config.variant,
        summary.n_reports,
        summary.initial_loss,
        summary.final_loss
    );
    Ok(TrainedModel {
        config: config.clone(),
        network,
        summary,
    })
}

impl<T: Scalar> TrainedModel<T> {
    /// Forecast for one report. Only the member fields and geometry are
    /// read; `track` lists cyclone centres up to and including this report.
    pub fn predict(&self, report: &Report<T>, track: &[LatLon], domain: &GridDomain) -> Result<GaussianField<T>> {
        let stack = assemble_stack(report, domain, track, self.config.passed_radius_km)?;
        let (rows, cols) = (domain.n_rows(), domain.n_cols());
        match &self.network {
            Network::Cnn(net) => {
                let (a, b) = net.evaluate(&net.input_tensor(&stack)?)?;
                net.head.to_gaussian(&a, &b, rows, cols)
            }
            Network::Fcn(net) => {
                let all: Vec<usize> = (0..rows * cols).collect();
                let (a, b) = net.evaluate(&net.input_tensor(&stack, &all)?)?;
                net.head.to_gaussian(&a, &b, rows, cols)
            }
        }
    }

    pub fn head(&self) -> &GaussianHead<T> {
        match &self.network {
            Network::Cnn(n) => &n.head,
            Network::Fcn(n) => &n.head,
        }
    }
}

#[cfg(test)]
mod tests;
