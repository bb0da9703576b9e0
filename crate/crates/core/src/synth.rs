//! Seeded synthetic cyclone scenarios with a known truth: an island with a
//! central ridge, a straight (or waypoint) track crossing it mid-sequence,
//! 24-hour accumulated truth rain with lognormal observation noise, and a
//! 20-member ensemble with a displaced track, damped orographic response and
//! a dry amplitude bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::haversine_km;
use crate::field::Field;
use crate::grid::{GridDomain, LatLon, PAPER_COLS, PAPER_LAT0, PAPER_LON0, PAPER_ROWS, SEA_SENTINEL};
use crate::report::{tabulate_categories, CategoryTable, Origin, Report, ReportIndex, N_MEMBERS};
use crate::scoring::GaussianField;

const KM_PER_DEG: f64 = 111.195;
/// 2015-08-05 18:00 UTC.
pub const DEFAULT_START_TIME: i64 = 1_438_797_600;
pub const REPORT_INTERVAL_S: i64 = 6 * 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSpec {
    pub start: LatLon,
    pub end: LatLon,
    /// Explicit per-report centres; overrides the straight start-end line.
    pub positions: Option<Vec<LatLon>>,
}

impl Default for TrackSpec {
    fn default() -> Self {
        TrackSpec {
            start: LatLon::new(21.6, 128.4),
            end: LatLon::new(26.2, 114.6),
            positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainSpec {
    /// Peak cyclone rain over flat ground, mm per 24 h.
    pub amplitude_mm: f64,
    /// e-folding distance from the cyclone centre.
    pub decay_km: f64,
    /// Fractional enhancement per km of altitude.
    pub terrain_factor_per_km: f64,
    pub background_mm: f64,
    /// Log-space standard deviation of the multiplicative observation noise.
    pub obs_log_sd: f64,
    /// Sub-steps per report used to accumulate rain over the trailing 24 h.
    pub accumulation_steps: usize,
}

impl Default for RainSpec {
    fn default() -> Self {
        RainSpec {
            amplitude_mm: 300.0,
            decay_km: 170.0,
            terrain_factor_per_km: 0.45,
            background_mm: 1.5,
            obs_log_sd: 0.3,
            accumulation_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    /// Mean multiplicative amplitude bias of the members.
    pub bias: f64,
    /// Log-space spread of the per-member amplitude factor.
    pub bias_log_sd: f64,
    /// Systematic displacement of the forecast track.
    pub track_bias_km: f64,
    /// Per-member, per-report track scatter (each coordinate).
    pub member_track_sd_km: f64,
    /// Fraction of the true orographic enhancement the members reproduce.
    pub terrain_response: f64,
    /// Forecast rain-shield size relative to the truth.
    pub decay_ratio: f64,
    /// Log-space cell noise per member.
    pub member_log_sd: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            bias: 0.65,
            bias_log_sd: 0.08,
            track_bias_km: 45.0,
            member_track_sd_km: 15.0,
            terrain_response: 0.3,
            decay_ratio: 1.0,
            member_log_sd: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            rows: PAPER_ROWS,
            cols: PAPER_COLS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_reports: usize,
    pub start_time: i64,
    pub domain: DomainSpec,
    pub track: TrackSpec,
    pub rain: RainSpec,
    pub ensemble: EnsembleSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 2015,
            n_reports: 15,
            start_time: DEFAULT_START_TIME,
            domain: DomainSpec::default(),
            track: TrackSpec::default(),
            rain: RainSpec::default(),
            ensemble: EnsembleSpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_reports < 2 {
            return bad(format!("n_reports {} must be >= 2", self.n_reports));
        }
        let r = &self.rain;
        if !(r.amplitude_mm >= 0.0 && r.amplitude_mm.is_finite()) {
            return bad(format!("amplitude {} must be finite and >= 0", r.amplitude_mm));
        }
        if r.decay_km.is_nan() || r.decay_km <= 0.0 {
            return bad(format!("decay length {} must be > 0", r.decay_km));
        }
        if r.accumulation_steps == 0 {
            return bad("accumulation_steps must be >= 1".into());
        }
        let e = &self.ensemble;
        for (name, v) in [
            ("background_mm", r.background_mm),
            ("obs_log_sd", r.obs_log_sd),
            ("terrain_factor_per_km", r.terrain_factor_per_km),
            ("bias", e.bias),
            ("bias_log_sd", e.bias_log_sd),
            ("track_bias_km", e.track_bias_km),
            ("member_track_sd_km", e.member_track_sd_km),
            ("terrain_response", e.terrain_response),
            ("member_log_sd", e.member_log_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if !(e.decay_ratio.is_finite() && e.decay_ratio > 0.0) {
            return bad(format!("decay_ratio {} must be > 0", e.decay_ratio));
        }
        if let Some(p) = &self.track.positions {
            if p.len() != self.n_reports {
                return bad(format!("{} track positions for {} reports", p.len(), self.n_reports));
            }
        }
        Ok(())
    }

    /// Cyclone centre for each original report.
    pub fn track_positions(&self) -> Vec<LatLon> {
        if let Some(p) = &self.track.positions {
            return p.clone();
        }
        let n = self.n_reports;
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                LatLon::new(
                    self.track.start.lat + f * (self.track.end.lat - self.track.start.lat),
                    self.track.start.lon + f * (self.track.end.lon - self.track.start.lon),
                )
            })
            .collect()
    }
}

/// An elongated island with a central ridge, covering the paper-scale
/// bounding box at any resolution.
pub fn synthetic_domain(rows: usize, cols: usize) -> Result<GridDomain> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidArgument("synthetic domain needs at least 2x2 cells".into()));
    }
    let cell = 0.05 * (PAPER_ROWS - 1) as f64 / (rows - 1) as f64;
    let (clat, clon) = (23.7, 121.0);
    let (semi_major, semi_minor) = (1.8, 0.53);
    let tilt = 20.0_f64.to_radians();
    let mut altitude = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let lat = PAPER_LAT0 + r as f64 * cell;
            let lon = PAPER_LON0 + c as f64 * cell;
            let (dy, dx) = (lat - clat, (lon - clon) * clat.to_radians().cos());
            // rotate so the major axis points NNE
            let along = dy * tilt.cos() + dx * tilt.sin();
            let across = -dy * tilt.sin() + dx * tilt.cos();
            let rho = ((along / semi_major).powi(2) + (across / semi_minor).powi(2)).sqrt();
            altitude.push(if rho < 1.0 {
                3500.0 * (1.0 - rho).powf(1.5)
            } else {
                SEA_SENTINEL
            });
        }
    }
    GridDomain::new(rows, cols, PAPER_LAT0, PAPER_LON0, cell, altitude)
}

/// Generated reports plus the generator's conditional truth distribution.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub domain: GridDomain,
    pub reports: Vec<Report<f64>>,
    pub track: Vec<LatLon>,
    /// Conditional mean of each report's observation.
    pub truth_mean: Vec<Field<f64>>,
    /// Conditional standard deviation of each report's observation.
    pub truth_std: Vec<Field<f64>>,
}

impl Scenario {
    /// The generator's own conditional distribution as a Gaussian forecast.
    pub fn truth_gaussian(&self, i: usize) -> Result<GaussianField<f64>> {
        GaussianField::new(
            self.truth_mean[i].clone(),
            self.truth_std[i].map(|s| s.max(1e-6)),
        )
    }
}

fn offset(p: LatLon, north_km: f64, east_km: f64) -> LatLon {
    LatLon::new(
        p.lat + north_km / KM_PER_DEG,
        p.lon + east_km / (KM_PER_DEG * p.lat.to_radians().cos()),
    )
}

/// Position at fractional report time `t` (0-based), linear between report
/// centres and extrapolated past either end.
fn position_at(track: &[LatLon], t: f64) -> LatLon {
    let n = track.len();
    let seg = (t.floor().max(0.0) as usize).min(n - 2);
    let f = t - seg as f64;
    let (a, b) = (track[seg], track[seg + 1]);
    LatLon::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
}

/// Mean of `exp(-d / L)` over the accumulation window ending at `t`.
fn accumulated_kernel(cell: LatLon, centers: &[LatLon], decay_km: f64) -> f64 {
    centers
        .iter()
        .map(|&p| (-haversine_km(cell, p) / decay_km).exp())
        .sum::<f64>()
        / centers.len() as f64
}

fn window(track: &[LatLon], t: f64, steps: usize) -> Vec<LatLon> {
    // e.g. 4 steps: t - 0.75, t - 0.5, t - 0.25, t (in 6 h report units)
    (0..steps)
        .map(|s| position_at(track, t - (steps - 1 - s) as f64 / steps as f64))
        .collect()
}

fn lognormal_factor<R: Rng>(rng: &mut R, log_sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (log_sd * z - 0.5 * log_sd * log_sd).exp()
}

pub fn generate_scenario(spec: &ScenarioSpec, domain: &GridDomain) -> Result<Scenario> {
    spec.validate()?;
    let track = spec.track_positions();
    for p in &track {
        p.validate()?;
    }
    let centers = domain.centers();
    let on_domain = |p: &LatLon| {
        let (lat_max, lon_max) = (
            domain.lat0() + (domain.n_rows() - 1) as f64 * domain.cell(),
            domain.lon0() + (domain.n_cols() - 1) as f64 * domain.cell(),
        );
        (domain.lat0()..=lat_max).contains(&p.lat) && (domain.lon0()..=lon_max).contains(&p.lon)
    };
    if !track.iter().any(on_domain) {
        log::warn!("cyclone track never enters the domain; generating anyway");
    }
    let rain = &spec.rain;
    let ens = &spec.ensemble;
    let alt_km: Vec<f64> = (0..domain.n_cells())
        .map(|i| domain.altitude_or_zero(i) / 1000.0)
        .collect();

    let mut scenario_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let heading: f64 = scenario_rng.random_range(0.0..std::f64::consts::TAU);
    let (bias_north, bias_east) = (
        ens.track_bias_km * heading.cos(),
        ens.track_bias_km * heading.sin(),
    );

    let (rows, cols) = (domain.n_rows(), domain.n_cols());
    let mut reports = Vec::with_capacity(spec.n_reports);
    let mut truth_mean = Vec::with_capacity(spec.n_reports);
    let mut truth_std = Vec::with_capacity(spec.n_reports);
    let obs_std_ratio = (rain.obs_log_sd.powi(2).exp() - 1.0).sqrt();

    for (k, &center) in track.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64 + 1);
        let t = k as f64;
        let true_window = window(&track, t, rain.accumulation_steps);
        let mean: Vec<f64> = centers
            .iter()
            .zip(&alt_km)
            .map(|(&cell, &a)| {
                let terrain = 1.0 + rain.terrain_factor_per_km * a;
                (rain.background_mm + rain.amplitude_mm * accumulated_kernel(cell, &true_window, rain.decay_km))
                    * terrain
            })
            .collect();
        let obs: Vec<f64> = mean
            .iter()
            .map(|&m| (m * lognormal_factor(&mut rng, rain.obs_log_sd)).max(0.0))
            .collect();

        let mut members = Vec::with_capacity(N_MEMBERS);
        for _ in 0..N_MEMBERS {
            let amp = ens.bias * lognormal_factor(&mut rng, ens.bias_log_sd);
            let dn: f64 = rng.sample::<f64, _>(StandardNormal) * ens.member_track_sd_km;
            let de: f64 = rng.sample::<f64, _>(StandardNormal) * ens.member_track_sd_km;
            let member_window: Vec<LatLon> = true_window
                .iter()
                .map(|&p| offset(p, bias_north + dn, bias_east + de))
                .collect();
            let decay = rain.decay_km * ens.decay_ratio;
            let values: Vec<f64> = centers
                .iter()
                .zip(&alt_km)
                .map(|(&cell, &a)| {
                    let terrain = 1.0 + ens.terrain_response * rain.terrain_factor_per_km * a;
                    let m = (rain.background_mm
                        + rain.amplitude_mm * accumulated_kernel(cell, &member_window, decay))
                        * terrain
                        * amp;
                    (m * lognormal_factor(&mut rng, ens.member_log_sd)).max(0.0)
                })
                .collect();
            members.push(Field::from_vec(rows, cols, values)?);
        }

        let report = Report::new(
            ReportIndex::integer(k as u32 + 1),
            Origin::Original,
            members,
            Some(Field::from_vec(rows, cols, obs)?),
            center,
            spec.start_time + k as i64 * REPORT_INTERVAL_S,
        )?;
        truth_std.push(Field::from_vec(
            rows,
            cols,
            mean.iter().map(|m| m * obs_std_ratio).collect(),
        )?);
        truth_mean.push(Field::from_vec(rows, cols, mean)?);
        reports.push(report);
    }
    Ok(Scenario {
        spec: spec.clone(),
        domain: domain.clone(),
        reports,
        track,
        truth_mean,
        truth_std,
    })
}

/// Observed category counts for every report of a scenario.
pub fn category_profile(scenario: &Scenario) -> Result<Vec<CategoryTable>> {
    scenario
        .reports
        .iter()
        .map(|r| tabulate_categories(r, &scenario.domain))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Terrain;
    use crate::report::RainCategory;

    fn small() -> (ScenarioSpec, GridDomain) {
        let spec = ScenarioSpec {
            domain: DomainSpec { rows: 28, cols: 24 },
            ..ScenarioSpec::default()
        };
        let d = synthetic_domain(28, 24).unwrap();
        (spec, d)
    }

    #[test]
    fn paper_scale_island_proportions() {
        let d = synthetic_domain(PAPER_ROWS, PAPER_COLS).unwrap();
        assert_eq!(d.n_cells(), 5880);
        let land = d.count_land();
        assert!((1100..1500).contains(&land), "{land}");
        let plain = d.count(Terrain::Plain) as f64 / land as f64;
        assert!((0.35..0.6).contains(&plain), "{plain}");
    }

    #[test]
    fn deterministic_per_seed() {
        let (spec, d) = small();
        let a = generate_scenario(&spec, &d).unwrap();
        let b = generate_scenario(&spec, &d).unwrap();
        assert_eq!(a.reports, b.reports);
        let c = generate_scenario(&ScenarioSpec { seed: 9, ..spec }, &d).unwrap();
        assert_ne!(a.reports, c.reports);
    }

    #[test]
    fn infinite_decay_without_noise_is_uniform() {
        let (mut spec, d) = small();
        spec.rain.decay_km = f64::INFINITY;
        spec.rain.obs_log_sd = 0.0;
        spec.rain.background_mm = 0.0;
        let s = generate_scenario(&spec, &d).unwrap();
        let obs = s.reports[3].observation().unwrap();
        for i in 0..d.n_cells() {
            let expected = spec.rain.amplitude_mm
                * (1.0 + spec.rain.terrain_factor_per_km * d.altitude_or_zero(i) / 1000.0);
            assert!((obs.as_slice()[i] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_amplitude_is_all_very_light() {
        let (mut spec, d) = small();
        spec.rain.amplitude_mm = 0.0;
        let s = generate_scenario(&spec, &d).unwrap();
        for t in category_profile(&s).unwrap() {
            assert_eq!(t.category_total(RainCategory::VeryLight), d.count_land());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let (spec, d) = small();
        let bad = ScenarioSpec { n_reports: 1, ..spec.clone() };
        assert!(generate_scenario(&bad, &d).is_err());
        let mut bad = spec;
        bad.rain.decay_km = 0.0;
        assert!(generate_scenario(&bad, &d).is_err());
    }
}
