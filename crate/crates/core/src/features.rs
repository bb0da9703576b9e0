//! Input channel assembly: ensemble members plus geographic and
//! cyclone-relative channels, and per-channel standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{GridDomain, LatLon};
use crate::report::{Report, N_MEMBERS};
use crate::scalar::{pairwise_sum, Scalar};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const N_GEO_DYN: usize = 5;
pub const N_CHANNELS: usize = N_MEMBERS + N_GEO_DYN;
pub const DEFAULT_PASSED_RADIUS_KM: f64 = 100.0;

/// Zero-based channel positions after the 20 members.
pub const CH_LON: usize = N_MEMBERS;
pub const CH_LAT: usize = N_MEMBERS + 1;
pub const CH_ALTITUDE: usize = N_MEMBERS + 2;
pub const CH_DIST_TC: usize = N_MEMBERS + 3;
pub const CH_PASSED: usize = N_MEMBERS + 4;

/// Great-circle distance on a spherical Earth.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn tc_distance_field<T: Scalar>(domain: &GridDomain, tc_center: LatLon) -> Result<Field<T>> {
    let tc = tc_center.validate()?;
    Ok(Field::from_fn(domain.n_rows(), domain.n_cols(), |r, c| {
        T::lit(haversine_km(domain.center(r, c), tc))
    }))
}

/// 1 where the track has come within `radius_km` of the cell, else 0.
pub fn passed_flag_field<T: Scalar>(
    track: &[LatLon],
    domain: &GridDomain,
    radius_km: f64,
) -> Result<Field<T>> {
    if track.is_empty() {
        return Err(Error::InvalidArgument("track must contain at least one position".into()));
    }
    if radius_km.is_nan() || radius_km < 0.0 {
        return Err(Error::InvalidArgument(format!("radius {radius_km} km must be >= 0")));
    }
    for p in track {
        p.validate()?;
    }
    Ok(Field::from_fn(domain.n_rows(), domain.n_cols(), |r, c| {
        let cell = domain.center(r, c);
        let near = track.iter().any(|&p| haversine_km(cell, p) <= radius_km);
        if near {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// Channel-major input tensor for one report.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack<T> {
    rows: usize,
    cols: usize,
    names: Vec<String>,
    data: Vec<T>,
}

pub fn channel_names() -> Vec<String> {
    let mut names: Vec<String> = (1..=N_MEMBERS).map(|m| format!("member_{m}")).collect();
    names.extend(["lon", "lat", "altitude", "dist_tc", "passed_flag"].map(String::from));
    names
}

impl<T: Scalar> FeatureStack<T> {
    pub fn from_channels(names: Vec<String>, channels: Vec<Field<T>>) -> Result<Self> {
        if names.len() != channels.len() || channels.is_empty() {
            return Err(Error::Shape(format!(
                "{} names for {} channels",
                names.len(),
                channels.len()
            )));
        }
        let (rows, cols) = (channels[0].rows(), channels[0].cols());
        let mut data = Vec::with_capacity(channels.len() * rows * cols);
        for ch in &channels {
            if ch.rows() != rows || ch.cols() != cols {
                return Err(Error::Shape("channels differ in shape".into()));
            }
            data.extend_from_slice(ch.as_slice());
        }
        Ok(FeatureStack {
            rows,
            cols,
            names,
            data,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.rows * self.cols;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_field(&self, c: usize) -> Field<T> {
        Field::from_vec(self.rows, self.cols, self.channel(c).to_vec()).expect("consistent shape")
    }

    /// Flat channel-major values, `[channel][row][col]`.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// The first `n` channels (20 = members only).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_channels() {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {n} of {} channels",
                self.n_channels()
            )));
        }
        let len = n * self.rows * self.cols;
        Ok(FeatureStack {
            rows: self.rows,
            cols: self.cols,
            names: self.names[..n].to_vec(),
            data: self.data[..len].to_vec(),
        })
    }
}

/// Builds the 25-channel stack in the documented order. `track` holds the
/// cyclone centres up to and including this report.
pub fn assemble_stack<T: Scalar>(
    report: &Report<T>,
    domain: &GridDomain,
    track: &[LatLon],
    passed_radius_km: f64,
) -> Result<FeatureStack<T>> {
    if report.members.len() != N_MEMBERS {
        return Err(Error::InvalidArgument(format!(
            "report {} has {} members, expected {N_MEMBERS}",
            report.index,
            report.members.len()
        )));
    }
    if report.rows() != domain.n_rows() || report.cols() != domain.n_cols() {
        return Err(Error::Shape(format!(
            "report {}x{} vs domain {}x{}",
            report.rows(),
            report.cols(),
            domain.n_rows(),
            domain.n_cols()
        )));
    }
    let mut channels = report.members.clone();
    channels.extend(geo_channels(domain));
    channels.push(tc_distance_field(domain, report.tc_center)?);
    channels.push(passed_flag_field(track, domain, passed_radius_km)?);
    FeatureStack::from_channels(channel_names(), channels)
}

/// Longitude, latitude and altitude (sea as 0 m).
pub fn geo_channels<T: Scalar>(domain: &GridDomain) -> [Field<T>; 3] {
    let (rows, cols) = (domain.n_rows(), domain.n_cols());
    [
        Field::from_fn(rows, cols, |r, c| T::lit(domain.center(r, c).lon)),
        Field::from_fn(rows, cols, |r, c| T::lit(domain.center(r, c).lat)),
        Field::from_fn(rows, cols, |r, c| T::lit(domain.altitude_or_zero(domain.flat(r, c)))),
    ]
}

/// Per-channel `(mean, std)` used as `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> NormStats<T> {
    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    pub fn cast<U: Scalar>(&self) -> NormStats<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect();
        NormStats {
            mean: c(&self.mean),
            std: c(&self.std),
        }
    }
}

/// Fits population mean/std per channel over every cell of every stack.
/// Constant channels get `(0, 1)` so they pass through unchanged.
pub fn fit_standardizer<T: Scalar>(stacks: &[FeatureStack<T>]) -> Result<NormStats<T>> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::InvalidArgument("standardizer needs at least one stack".into()))?;
    let n_ch = first.n_channels();
    if stacks
        .iter()
        .any(|s| s.n_channels() != n_ch || s.rows != first.rows || s.cols != first.cols)
    {
        return Err(Error::Shape("stacks differ in shape".into()));
    }
    let mut mean = Vec::with_capacity(n_ch);
    let mut std = Vec::with_capacity(n_ch);
    for c in 0..n_ch {
        let values: Vec<T> = stacks.iter().flat_map(|s| s.channel(c).iter().copied()).collect();
        let n = T::from_usize_lossy(values.len());
        let m = pairwise_sum(&values) / n;
        let sq: Vec<T> = values.iter().map(|&v| (v - m) * (v - m)).collect();
        let s = (pairwise_sum(&sq) / n).sqrt();
        let scale = m.abs().max(T::one());
        if !(s > T::lit(1e-9) * scale) {
            mean.push(T::zero());
            std.push(T::one());
        } else {
            mean.push(m);
            std.push(s);
        }
    }
    Ok(NormStats { mean, std })
}

pub fn apply_standardizer<T: Scalar>(
    stack: &FeatureStack<T>,
    stats: &NormStats<T>,
) -> Result<FeatureStack<T>> {
    transform(stack, stats, |x, m, s| (x - m) / s)
}

pub fn invert_standardizer<T: Scalar>(
    stack: &FeatureStack<T>,
    stats: &NormStats<T>,
) -> Result<FeatureStack<T>> {
    transform(stack, stats, |z, m, s| z * s + m)
}

fn transform<T: Scalar>(
    stack: &FeatureStack<T>,
    stats: &NormStats<T>,
    f: impl Fn(T, T, T) -> T,
) -> Result<FeatureStack<T>> {
    if stats.n_channels() != stack.n_channels() {
        return Err(Error::Shape(format!(
            "{} norm channels for a {}-channel stack",
            stats.n_channels(),
            stack.n_channels()
        )));
    }
    let n = stack.rows * stack.cols;
    let mut data = stack.data.clone();
    for (c, chunk) in data.chunks_mut(n).enumerate() {
        let (m, s) = (stats.mean[c], stats.std[c]);
        for v in chunk {
            *v = f(*v, m, s);
        }
    }
    Ok(FeatureStack {
        data,
        ..stack.clone()
    })
}
