//! Training-set augmentation by midpoint interpolation of consecutive
//! reports and noise injection into member fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::report::{cmp_reports, Origin, Report, ReportIndex};
use crate::scalar::{pairwise_sum, Scalar};

pub const DEFAULT_NOISE_SCALE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct AugmentedSet<T> {
    pub reports: Vec<Report<T>>,
    pub noise_scale: f64,
    pub seed: u64,
}

impl<T: Scalar> AugmentedSet<T> {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn indices(&self) -> Vec<(ReportIndex, Origin)> {
        self.reports.iter().map(|r| (r.index, r.origin)).collect()
    }
}

/// Midpoint of two consecutive original reports, placed at index `k + 0.5`.
pub fn interpolate_reports<T: Scalar>(a: &Report<T>, b: &Report<T>) -> Result<Report<T>> {
    if a.origin != Origin::Original || b.origin != Origin::Original {
        return Err(Error::InvalidArgument("interpolation needs two original reports".into()));
    }
    if !a.index.is_integer() || b.index.halves() != a.index.halves() + 2 {
        return Err(Error::InvalidArgument(format!(
            "reports {} and {} are not consecutive",
            a.index, b.index
        )));
    }
    let half = T::lit(0.5);
    let mid = |x: &Field<T>, y: &Field<T>| x.zip_with(y, |p, q| half * (p + q));
    let members = a
        .members
        .iter()
        .zip(&b.members)
        .map(|(x, y)| mid(x, y))
        .collect::<Result<Vec<_>>>()?;
    let observation = match (&a.observation, &b.observation) {
        (Some(x), Some(y)) => Some(mid(x, y)?),
        _ => None,
    };
    let valid_time = a.valid_time + (b.valid_time - a.valid_time) / 2;
    Report::new(
        a.index.next_half(),
        Origin::Interpolated,
        members,
        observation,
        a.tc_center.midpoint(b.tc_center),
        valid_time,
    )
}

/// Seeded stream for the noise copy of the report at `index`. Streams are
/// keyed by index, so any subset of reports can be regenerated on its own.
pub fn noise_rng(seed: u64, index: ReportIndex) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(index.halves()) + 1);
    rng
}

/// Adds `N(0, (eta * std(field))^2)` noise to each member field, clamped at 0.
/// Observation and geometry are left untouched.
pub fn inject_noise<T: Scalar, R: Rng + ?Sized>(
    report: &Report<T>,
    eta: f64,
    rng: &mut R,
) -> Result<Report<T>> {
    if eta.is_nan() || eta < 0.0 {
        return Err(Error::InvalidArgument(format!("noise scale {eta} must be >= 0")));
    }
    let members = report
        .members
        .iter()
        .map(|field| {
            let values = field.as_slice();
            let n = T::from_usize_lossy(values.len());
            let mean = pairwise_sum(values) / n;
            let sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
            let sd = (pairwise_sum(&sq) / n).sqrt();
            let scale = T::lit(eta) * sd;
            field.map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                (v + scale * T::lit(z)).max(T::zero())
            })
        })
        .collect();
    Report::new(
        report.index,
        Origin::NoiseInjected,
        members,
        report.observation.clone(),
        report.tc_center,
        report.valid_time,
    )
}

fn check_consecutive<T: Scalar>(originals: &[Report<T>]) -> Result<Vec<Report<T>>> {
    let mut sorted = originals.to_vec();
    sorted.sort_by(cmp_reports);
    for r in &sorted {
        if r.origin != Origin::Original {
            return Err(Error::InvalidArgument(format!(
                "report {} is not an original report",
                r.index
            )));
        }
    }
    for w in sorted.windows(2) {
        if w[1].index.halves() != w[0].index.halves() + 2 {
            return Err(Error::InvalidArgument(format!(
                "original indices {} and {} are not consecutive",
                w[0].index, w[1].index
            )));
        }
    }
    Ok(sorted)
}

/// Augments any non-empty run of consecutive originals. A single original
/// yields itself plus its noise copy.
pub(crate) fn augment_run<T: Scalar>(
    originals: &[Report<T>],
    eta: f64,
    seed: u64,
) -> Result<AugmentedSet<T>> {
    if originals.is_empty() {
        return Err(Error::InvalidArgument("no reports to augment".into()));
    }
    let sorted = check_consecutive(originals)?;
    let mut base = Vec::with_capacity(2 * sorted.len() - 1);
    for (i, r) in sorted.iter().enumerate() {
        base.push(r.clone());
        if let Some(next) = sorted.get(i + 1) {
            base.push(interpolate_reports(r, next)?);
        }
    }
    let mut reports = Vec::with_capacity(2 * base.len());
    for r in base {
        let noisy = inject_noise(&r, eta, &mut noise_rng(seed, r.index))?;
        reports.push(r);
        reports.push(noisy);
    }
    reports.sort_by(cmp_reports);
    Ok(AugmentedSet {
        reports,
        noise_scale: eta,
        seed,
    })
}

/// From `N >= 2` consecutive originals builds the `2(2N - 1)` report set:
/// originals, midpoints, and one noise copy of each.
pub fn build_augmented_set<T: Scalar>(
    originals: &[Report<T>],
    eta: f64,
    seed: u64,
) -> Result<AugmentedSet<T>> {
    if originals.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs at least 2 originals, got {}",
            originals.len()
        )));
    }
    augment_run(originals, eta, seed)
}

/// Every report, of any origin, whose index is strictly below `target_k`.
pub fn training_subset<T: Scalar>(set: &AugmentedSet<T>, target_k: u32) -> Result<Vec<Report<T>>> {
    let cutoff = ReportIndex::integer(target_k);
    let mut subset: Vec<Report<T>> =
        set.reports.iter().filter(|r| r.index < cutoff).cloned().collect();
    if subset.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no training reports precede target {target_k}"
        )));
    }
    subset.sort_by(cmp_reports);
    Ok(subset)
}
