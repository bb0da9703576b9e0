//! Forecast reports, their fractional indices, and the rain-category taxonomy.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{GridDomain, LatLon, Terrain};
use crate::scalar::Scalar;

/// Ensemble size of every report.
pub const N_MEMBERS: usize = 20;

/// A report index on the half-step lattice `1, 1.5, 2, ...`, stored exactly
/// as a count of half steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReportIndex(u32);

impl ReportIndex {
    pub fn from_halves(halves: u32) -> Self {
        ReportIndex(halves)
    }

    pub fn integer(k: u32) -> Self {
        ReportIndex(2 * k)
    }

    pub fn halves(self) -> u32 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// The original report at or below this index.
    pub fn floor(self) -> u32 {
        self.0 / 2
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Index in tenths, used in directory names (1.5 -> 15).
    pub fn tenths(self) -> u32 {
        self.0 * 5
    }

    pub fn from_tenths(tenths: u32) -> Result<Self> {
        if tenths % 5 != 0 {
            return Err(Error::InvalidArgument(format!(
                "index {tenths} tenths is not on the half-step lattice"
            )));
        }
        Ok(ReportIndex(tenths / 5))
    }

    /// The midpoint between this index and the next integer index.
    pub fn next_half(self) -> Self {
        ReportIndex(self.0 + 1)
    }
}

impl fmt::Display for ReportIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Original,
    Interpolated,
    NoiseInjected,
}

impl Origin {
    pub fn is_noise(self) -> bool {
        self == Origin::NoiseInjected
    }
}

/// One forecast origin: the 20-member ensemble, the verifying observation
/// (absent for a report being forecast), and the cyclone centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Report<T> {
    pub index: ReportIndex,
    pub origin: Origin,
    pub members: Vec<Field<T>>,
    pub observation: Option<Field<T>>,
    pub tc_center: LatLon,
    /// Valid time, seconds since the Unix epoch (UTC).
    pub valid_time: i64,
}

impl<T: Scalar> Report<T> {
    pub fn new(
        index: ReportIndex,
        origin: Origin,
        members: Vec<Field<T>>,
        observation: Option<Field<T>>,
        tc_center: LatLon,
        valid_time: i64,
    ) -> Result<Self> {
        let report = Report {
            index,
            origin,
            members,
            observation,
            tc_center,
            valid_time,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.len() != N_MEMBERS {
            return Err(Error::InvalidArgument(format!(
                "report {} has {} members, expected {N_MEMBERS}",
                self.index,
                self.members.len()
            )));
        }
        if self.origin == Origin::Original && !self.index.is_integer() {
            return Err(Error::InvalidArgument(format!(
                "original report carries fractional index {}",
                self.index
            )));
        }
        self.tc_center.validate()?;
        let shape = &self.members[0];
        for (m, field) in self.members.iter().enumerate() {
            if !field.same_shape(shape) {
                return Err(Error::Shape(format!("member {} of report {}", m + 1, self.index)));
            }
            if !field.all_finite_nonnegative() {
                return Err(Error::Domain(format!(
                    "member {} of report {} has negative or non-finite precipitation",
                    m + 1,
                    self.index
                )));
            }
        }
        if let Some(obs) = &self.observation {
            if !obs.same_shape(shape) {
                return Err(Error::Shape(format!("observation of report {}", self.index)));
            }
            if !obs.all_finite_nonnegative() {
                return Err(Error::Domain(format!(
                    "observation of report {} has negative or non-finite precipitation",
                    self.index
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.members[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.members[0].cols()
    }

    pub fn observation(&self) -> Result<&Field<T>> {
        self.observation
            .as_ref()
            .ok_or_else(|| Error::MissingObservation(self.index.to_string()))
    }

    /// The same report with its observation removed, i.e. what is known at
    /// forecast time.
    pub fn forecast_only(&self) -> Self {
        Report {
            observation: None,
            ..self.clone()
        }
    }

    /// Sort key: index first, originals and interpolations before noise copies.
    pub fn order_key(&self) -> (ReportIndex, bool) {
        (self.index, self.origin.is_noise())
    }

    pub fn cast<U: Scalar>(&self) -> Report<U> {
        Report {
            index: self.index,
            origin: self.origin,
            members: self.members.iter().map(Field::cast).collect(),
            observation: self.observation.as_ref().map(Field::cast),
            tc_center: self.tc_center,
            valid_time: self.valid_time,
        }
    }
}

pub(crate) fn cmp_reports<T: Scalar>(a: &Report<T>, b: &Report<T>) -> Ordering {
    a.order_key().cmp(&b.order_key())
}

/// 24-hour accumulated rain classes with upper-closed boundaries at
/// 10, 80 and 200 mm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RainCategory {
    VeryLight,
    Light,
    Heavy,
    BeyondHeavy,
}

impl RainCategory {
    pub const ALL: [RainCategory; 4] = [
        RainCategory::VeryLight,
        RainCategory::Light,
        RainCategory::Heavy,
        RainCategory::BeyondHeavy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RainCategory::VeryLight => "very_light",
            RainCategory::Light => "light",
            RainCategory::Heavy => "heavy",
            RainCategory::BeyondHeavy => "beyond_heavy",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

pub fn classify_rain<T: Scalar>(y: T) -> Result<RainCategory> {
    if !y.is_finite() || y < T::zero() {
        return Err(Error::Domain(format!("precipitation {y} must be finite and >= 0")));
    }
    Ok(if y <= T::lit(10.0) {
        RainCategory::VeryLight
    } else if y <= T::lit(80.0) {
        RainCategory::Light
    } else if y <= T::lit(200.0) {
        RainCategory::Heavy
    } else {
        RainCategory::BeyondHeavy
    })
}

/// Land-cell counts per (rain category, terrain). Column 0 is plain,
/// column 1 mountain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryTable {
    pub counts: [[usize; 2]; 4],
}

impl CategoryTable {
    pub fn get(&self, category: RainCategory, terrain: Terrain) -> usize {
        match terrain {
            Terrain::Plain => self.counts[category.ordinal()][0],
            Terrain::Mountain => self.counts[category.ordinal()][1],
            Terrain::Sea => 0,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn terrain_total(&self, terrain: Terrain) -> usize {
        RainCategory::ALL.iter().map(|&c| self.get(c, terrain)).sum()
    }

    pub fn category_total(&self, category: RainCategory) -> usize {
        self.counts[category.ordinal()].iter().sum()
    }
}

pub fn tabulate_categories<T: Scalar>(
    report: &Report<T>,
    domain: &GridDomain,
) -> Result<CategoryTable> {
    let obs = report.observation()?;
    if obs.rows() != domain.n_rows() || obs.cols() != domain.n_cols() {
        return Err(Error::Shape(format!(
            "observation {}x{} vs domain {}x{}",
            obs.rows(),
            obs.cols(),
            domain.n_rows(),
            domain.n_cols()
        )));
    }
    let mut table = CategoryTable::default();
    for (flat, (&y, &terrain)) in obs.as_slice().iter().zip(domain.terrain()).enumerate() {
        let col = match terrain {
            Terrain::Plain => 0,
            Terrain::Mountain => 1,
            Terrain::Sea => continue,
        };
        let cat = classify_rain(y).map_err(|e| Error::Domain(format!("cell {flat}: {e}")))?;
        table.counts[cat.ordinal()][col] += 1;
    }
    Ok(table)
}
