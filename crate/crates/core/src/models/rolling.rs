use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, LatLon};
use crate::models::{predict_members_baseline, train_model, ModelConfig, TrainingSummary, Variant};
use crate::report::{cmp_reports, Origin, Report, ReportIndex};
use crate::scalar::Scalar;
use crate::scoring::GaussianField;

#[derive(Debug, Clone)]
pub struct VariantPrediction<T> {
    pub variant: Variant,
    pub target: u32,
    pub forecast: GaussianField<T>,
    /// `None` for the untrained Members baseline.
    pub summary: Option<TrainingSummary>,
}

#[derive(Debug, Clone)]
pub struct RollingOutput<T> {
    /// Ordered by target, then by position in the config list.
    pub predictions: Vec<VariantPrediction<T>>,
    pub skipped: Vec<(Variant, u32, String)>,
}

impl<T: Scalar> RollingOutput<T> {
    pub fn get(&self, variant: Variant, target: u32) -> Option<&VariantPrediction<T>> {
        self.predictions
            .iter()
            .find(|p| p.variant == variant && p.target == target)
    }
}

/// Runs one (config, target) job: history is every original before `k`,
/// and of report `k` only the forecast side is passed on.
fn run_job<T: Scalar>(
    config: &ModelConfig,
    originals: &[Report<T>],
    domain: &GridDomain,
    target: u32,
) -> Result<VariantPrediction<T>> {
    let cutoff = ReportIndex::integer(target);
    let report = originals
        .iter()
        .find(|r| r.index == cutoff)
        .ok_or_else(|| Error::InvalidArgument(format!("no report {target} in the scenario")))?
        .forecast_only();
    let history: Vec<Report<T>> = originals.iter().filter(|r| r.index < cutoff).cloned().collect();
    if config.variant == Variant::Members {
        return Ok(VariantPrediction {
            variant: config.variant,
            target,
            forecast: predict_members_baseline(&report)?,
            summary: None,
        });
    }
    let job_config = ModelConfig {
        seed: config.seed_for_target(target),
        ..config.clone()
    };
    let model = train_model(&job_config, &history, domain)?;
    let mut track: Vec<LatLon> = history.iter().map(|r| r.tc_center).collect();
    track.push(report.tc_center);
    Ok(VariantPrediction {
        variant: config.variant,
        target,
        forecast: model.predict(&report, &track, domain)?,
        summary: Some(model.summary),
    })
}

/// Trains each config once per target on the originals preceding it and
/// forecasts the target. Jobs without training history are skipped with a
/// warning; other failures abort the run.
pub fn rolling_origin_run<T: Scalar>(
    configs: &[ModelConfig],
    reports: &[Report<T>],
    domain: &GridDomain,
    targets: &[u32],
) -> Result<RollingOutput<T>> {
    let mut originals: Vec<Report<T>> = reports
        .iter()
        .filter(|r| r.origin == Origin::Original)
        .cloned()
        .collect();
    originals.sort_by(cmp_reports);
    let mut skipped = Vec::new();
    let mut jobs: Vec<(u32, &ModelConfig)> = Vec::new();
    for &k in targets {
        let has_history = originals.iter().any(|r| r.index < ReportIndex::integer(k));
        for c in configs {
            if c.variant != Variant::Members && !has_history {
                let msg = format!("target {k} has no preceding reports to train on");
                log::warn!("skipping {}: {msg}", c.variant);
                skipped.push((c.variant, k, msg));
            } else {
                jobs.push((k, c));
            }
        }
    }
    let predictions = jobs
        .par_iter()
        .map(|&(k, c)| run_job(c, &originals, domain, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(RollingOutput {
        predictions,
        skipped,
    })
}
