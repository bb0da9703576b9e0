//! Verification products: exceedance probabilities and maps, per-cell
//! skill tables, CRPSS box summaries by stratum, and reliability bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{GridDomain, Terrain};
use crate::report::{classify_rain, RainCategory, ReportIndex};
use crate::scalar::{normal_sf, Scalar};
use crate::scoring::{crpss, GaussianField};

pub const EXTREME_THRESHOLD_MM: f64 = 200.0;
pub const DEFAULT_MAP_CUTOFF: f64 = 0.5;
pub const DEFAULT_RELIABILITY_BINS: usize = 10;

/// `P(y > threshold)` per cell under the Gaussian forecast.
pub fn exceedance_probability<T: Scalar>(field: &GaussianField<T>, threshold: T) -> Field<T> {
    field
        .mu
        .zip_with(&field.sigma, |m, s| normal_sf((threshold - m) / s))
        .expect("forecast fields share a shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCell {
    pub row: usize,
    pub col: usize,
    pub p: f64,
}

/// Land cells with probability above `cutoff`, most likely first.
pub fn exceedance_map<T: Scalar>(
    probabilities: &Field<T>,
    domain: &GridDomain,
    cutoff: f64,
) -> Result<Vec<ExceedanceCell>> {
    if probabilities.rows() != domain.n_rows() || probabilities.cols() != domain.n_cols() {
        return Err(Error::Shape("probability field does not match the domain".into()));
    }
    let mut cells: Vec<ExceedanceCell> = domain
        .land_cells()
        .into_iter()
        .filter_map(|i| {
            let p = probabilities.as_slice()[i].as_f64();
            (p > cutoff).then(|| {
                let (row, col) = domain.row_col(i);
                ExceedanceCell { row, col, p }
            })
        })
        .collect();
    cells.sort_by(|a, b| b.p.total_cmp(&a.p).then((a.row, a.col).cmp(&(b.row, b.col))));
    Ok(cells)
}

/// One land cell of one target report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRow {
    pub report_index: ReportIndex,
    pub row: usize,
    pub col: usize,
    pub terrain: Terrain,
    pub category: RainCategory,
    pub crps_model: f64,
    pub crps_ref: f64,
    pub crpss: Option<f64>,
}

/// Per-land-cell CRPS of `model` and `reference` against `obs`; the
/// category is taken from the observation.
pub fn skill_rows<T: Scalar>(
    index: ReportIndex,
    model: &GaussianField<T>,
    reference: &GaussianField<T>,
    obs: &Field<T>,
    domain: &GridDomain,
) -> Result<Vec<SkillRow>> {
    if obs.rows() != domain.n_rows() || obs.cols() != domain.n_cols() {
        return Err(Error::Shape("observation does not match the domain".into()));
    }
    let m = model.crps_field(obs)?;
    let r = reference.crps_field(obs)?;
    let land = domain.land_cells();
    let ms: Vec<T> = land.iter().map(|&i| m.as_slice()[i]).collect();
    let rs: Vec<T> = land.iter().map(|&i| r.as_slice()[i]).collect();
    let skill = crpss(&ms, &rs)?;
    land.iter()
        .enumerate()
        .map(|(j, &i)| {
            let (row, col) = domain.row_col(i);
            Ok(SkillRow {
                report_index: index,
                row,
                col,
                terrain: domain.terrain()[i],
                category: classify_rain(obs.as_slice()[i])?,
                crps_model: ms[j].as_f64(),
                crps_ref: rs[j].as_f64(),
                crpss: skill[j].map(Scalar::as_f64),
            })
        })
        .collect()
}

/// Box-plot numbers with Tukey whiskers: the most extreme values within
/// 1.5 IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `None` for an empty sample. Non-finite values are rejected.
pub fn box_summary(values: &[f64]) -> Result<Option<BoxSummary>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("box summary input".into()));
    }
    if values.is_empty() {
        return Ok(None);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (
        quantile_sorted(&s, 0.25),
        quantile_sorted(&s, 0.5),
        quantile_sorted(&s, 0.75),
    );
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let lower_whisker = s.iter().copied().find(|&v| v >= lo).unwrap_or(q1);
    let upper_whisker = s.iter().rev().copied().find(|&v| v <= hi).unwrap_or(q3);
    Ok(Some(BoxSummary {
        n: s.len(),
        lower_whisker,
        q1,
        median,
        q3,
        upper_whisker,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub category: RainCategory,
    pub terrain: Terrain,
    /// `None` when no cell with a defined CRPSS falls in the stratum.
    pub summary: Option<BoxSummary>,
}

/// CRPSS box summaries for every (category, terrain) land stratum. Cells
/// with an undefined CRPSS are left out.
pub fn crpss_by_stratum(rows: &[SkillRow]) -> Result<Vec<StratumSummary>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty skill table".into()));
    }
    let mut out = Vec::with_capacity(8);
    for terrain in [Terrain::Plain, Terrain::Mountain] {
        for category in RainCategory::ALL {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.terrain == terrain && r.category == category)
                .filter_map(|r| r.crpss)
                .collect();
            out.push(StratumSummary {
                category,
                terrain,
                summary: box_summary(&values)?,
            });
        }
    }
    Ok(out)
}

/// Median CRPSS over rows matching `keep`, if any.
pub fn median_crpss(rows: &[SkillRow], keep: impl Fn(&SkillRow) -> bool) -> Option<f64> {
    let values: Vec<f64> = rows.iter().filter(|r| keep(r)).filter_map(|r| r.crpss).collect();
    box_summary(&values).ok().flatten().map(|b| b.median)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_probability: Option<f64>,
    pub observed_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub threshold: f64,
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Count-weighted mean of `|frequency - mean probability|` over
    /// populated bins; `None` when every bin is empty.
    pub fn mean_abs_calibration_error(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let sum: f64 = self
            .bins
            .iter()
            .filter_map(|b| {
                Some(b.count as f64 * (b.observed_frequency? - b.mean_probability?).abs())
            })
            .sum();
        Some(sum / total as f64)
    }
}

/// Equal-width bins on `[0, 1]`; probability 1 falls in the last bin.
pub fn reliability_diagram<T: Scalar>(
    probabilities: &[T],
    observations: &[T],
    threshold: f64,
    n_bins: usize,
) -> Result<ReliabilityBins> {
    if probabilities.len() != observations.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} observations",
            probabilities.len(),
            observations.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut p_sum = vec![0.0f64; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&p, &y) in probabilities.iter().zip(observations) {
        let p = p.as_f64();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
        count[b] += 1;
        p_sum[b] += p;
        if y.as_f64() > threshold {
            hits[b] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|b| {
            let n = count[b];
            ReliabilityBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                count: n,
                mean_probability: (n > 0).then(|| p_sum[b] / n as f64),
                observed_frequency: (n > 0).then(|| hits[b] as f64 / n as f64),
            }
        })
        .collect();
    Ok(ReliabilityBins { threshold, bins })
}

#[cfg(test)]
mod tests;
