//! The spatial lattice: geometry, land mask and terrain classes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAPER_ROWS: usize = 84;
pub const PAPER_COLS: usize = 70;
/// Centre of the south-west cell.
pub const PAPER_LAT0: f64 = 21.375;
pub const PAPER_LON0: f64 = 119.55;
pub const PAPER_CELL: f64 = 0.05;

/// Altitude value that marks a sea cell in domain files.
pub const SEA_SENTINEL: f64 = -9999.0;
/// Land cells at or above this altitude are mountain cells.
pub const MOUNTAIN_ALTITUDE_M: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Terrain {
    Plain,
    Mountain,
    Sea,
}

impl Terrain {
    pub fn label(self) -> &'static str {
        match self {
            Terrain::Plain => "plain",
            Terrain::Mountain => "mountain",
            Terrain::Sea => "sea",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn validate(self) -> Result<Self> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(Error::Domain(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(self.lon.is_finite() && (-180.0..360.0).contains(&self.lon)) {
            return Err(Error::Domain(format!("longitude {} outside [-180, 360)", self.lon)));
        }
        Ok(self)
    }

    pub fn midpoint(self, other: LatLon) -> LatLon {
        LatLon::new(0.5 * (self.lat + other.lat), 0.5 * (self.lon + other.lon))
    }
}

/// Regular lat/lon lattice with per-cell altitude and terrain class.
///
/// Coordinates refer to cell centres: cell `(row, col)` sits at
/// `(lat0 + row * cell, lon0 + col * cell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    n_rows: usize,
    n_cols: usize,
    lat0: f64,
    lon0: f64,
    cell: f64,
    altitude: Vec<f64>,
    terrain: Vec<Terrain>,
}

impl GridDomain {
    /// Builds a domain from row-major altitudes in metres; `SEA_SENTINEL`
    /// (or any non-finite value) marks sea.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        lat0: f64,
        lon0: f64,
        cell: f64,
        altitude: Vec<f64>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidArgument("domain must have at least one cell".into()));
        }
        if !(cell.is_finite() && cell > 0.0) {
            return Err(Error::InvalidArgument(format!("cell size {cell} must be positive")));
        }
        if altitude.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{n_rows}x{n_cols} domain needs {} altitudes, got {}",
                n_rows * n_cols,
                altitude.len()
            )));
        }
        LatLon::new(lat0, lon0).validate()?;
        let terrain = altitude
            .iter()
            .map(|&a| {
                if !a.is_finite() || a == SEA_SENTINEL {
                    Terrain::Sea
                } else if a < MOUNTAIN_ALTITUDE_M {
                    Terrain::Plain
                } else {
                    Terrain::Mountain
                }
            })
            .collect();
        Ok(GridDomain {
            n_rows,
            n_cols,
            lat0,
            lon0,
            cell,
            altitude,
            terrain,
        })
    }

    /// The 84x70 lattice at 0.05 degrees with the given altitudes.
    pub fn paper_scale(altitude: Vec<f64>) -> Result<Self> {
        Self::new(PAPER_ROWS, PAPER_COLS, PAPER_LAT0, PAPER_LON0, PAPER_CELL, altitude)
    }

    /// The 84x70 lattice with every cell at sea.
    pub fn paper_scale_sea() -> Self {
        Self::paper_scale(vec![SEA_SENTINEL; PAPER_ROWS * PAPER_COLS]).expect("static domain")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn lat0(&self) -> f64 {
        self.lat0
    }

    pub fn lon0(&self) -> f64 {
        self.lon0
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    /// Raw altitudes, sea cells carrying the sentinel.
    pub fn altitude(&self) -> &[f64] {
        &self.altitude
    }

    /// Altitude with sea cells reported as 0 m.
    pub fn altitude_or_zero(&self, flat: usize) -> f64 {
        match self.terrain[flat] {
            Terrain::Sea => 0.0,
            _ => self.altitude[flat],
        }
    }

    pub fn terrain(&self) -> &[Terrain] {
        &self.terrain
    }

    pub fn is_land(&self, flat: usize) -> bool {
        self.terrain[flat] != Terrain::Sea
    }

    pub fn land_mask(&self) -> Vec<bool> {
        self.terrain.iter().map(|&t| t != Terrain::Sea).collect()
    }

    /// Flat indices of land cells in row-major order.
    pub fn land_cells(&self) -> Vec<usize> {
        (0..self.n_cells()).filter(|&i| self.is_land(i)).collect()
    }

    pub fn count(&self, terrain: Terrain) -> usize {
        self.terrain.iter().filter(|&&t| t == terrain).count()
    }

    pub fn count_land(&self) -> usize {
        self.n_cells() - self.count(Terrain::Sea)
    }

    #[inline]
    pub fn flat(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    #[inline]
    pub fn row_col(&self, flat: usize) -> (usize, usize) {
        (flat / self.n_cols, flat % self.n_cols)
    }

    pub fn cell_latlon(&self, row: usize, col: usize) -> Result<LatLon> {
        if row >= self.n_rows || col >= self.n_cols {
            return Err(Error::Domain(format!(
                "cell ({row}, {col}) outside {}x{} lattice",
                self.n_rows, self.n_cols
            )));
        }
        Ok(self.center(row, col))
    }

    #[inline]
    pub(crate) fn center(&self, row: usize, col: usize) -> LatLon {
        LatLon::new(
            self.lat0 + row as f64 * self.cell,
            self.lon0 + col as f64 * self.cell,
        )
    }

    /// Cell centres in row-major order.
    pub fn centers(&self) -> Vec<LatLon> {
        (0..self.n_cells())
            .map(|i| {
                let (r, c) = self.row_col(i);
                self.center(r, c)
            })
            .collect()
    }

    /// Serialises to the plain-text domain format: a header line
    /// `rows cols lat0 lon0 cell`, then one line of altitudes per row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} {} {} {} {}",
            self.n_rows, self.n_cols, self.lat0, self.lon0, self.cell
        )
        .unwrap();
        for r in 0..self.n_rows {
            let row = &self.altitude[r * self.n_cols..(r + 1) * self.n_cols];
            let line: Vec<String> = row
                .iter()
                .zip(&self.terrain[r * self.n_cols..(r + 1) * self.n_cols])
                .map(|(a, t)| {
                    if *t == Terrain::Sea {
                        format!("{SEA_SENTINEL}")
                    } else {
                        format!("{a}")
                    }
                })
                .collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::parse("<domain>", msg);
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| bad(format!("unexpected end of file reading {what}")))
        };
        let n_rows: usize = next("rows")?.parse().map_err(|e| bad(format!("rows: {e}")))?;
        let n_cols: usize = next("cols")?.parse().map_err(|e| bad(format!("cols: {e}")))?;
        let lat0: f64 = next("lat0")?.parse().map_err(|e| bad(format!("lat0: {e}")))?;
        let lon0: f64 = next("lon0")?.parse().map_err(|e| bad(format!("lon0: {e}")))?;
        let cell: f64 = next("cell")?.parse().map_err(|e| bad(format!("cell: {e}")))?;
        let mut altitude = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows * n_cols {
            let tok = next("altitude")?;
            let v: f64 = tok
                .parse()
                .map_err(|e| bad(format!("altitude #{i} {tok:?}: {e}")))?;
            altitude.push(v);
        }
        if tokens.next().is_some() {
            return Err(bad("trailing values after altitude grid".into()));
        }
        Self::new(n_rows, n_cols, lat0, lon0, cell, altitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> GridDomain {
        // 3x3: a plain cell, a mountain cell, a 500 m boundary cell, rest sea
        let s = SEA_SENTINEL;
        GridDomain::new(3, 3, 22.0, 120.0, 0.1, vec![s, 10.0, s, 499.9, 500.0, 2000.0, s, s, s])
            .unwrap()
    }

    #[test]
    fn paper_scale_has_5880_cells() {
        let d = GridDomain::paper_scale_sea();
        assert_eq!(d.n_cells(), 5880);
        assert_eq!(d.n_rows() * d.n_cols(), 5880);
    }

    #[test]
    fn terrain_split_at_500m() {
        let d = toy();
        assert_eq!(d.count(Terrain::Plain), 2);
        assert_eq!(d.count(Terrain::Mountain), 2);
        assert_eq!(d.count_land(), d.count(Terrain::Plain) + d.count(Terrain::Mountain));
        assert_eq!(d.terrain()[d.flat(1, 1)], Terrain::Mountain);
    }

    #[test]
    fn corner_coordinates() {
        let d = GridDomain::paper_scale_sea();
        let sw = d.cell_latlon(0, 0).unwrap();
        assert_eq!((sw.lat, sw.lon), (21.375, 119.55));
        let ne = d.cell_latlon(83, 69).unwrap();
        assert!((ne.lat - 25.525).abs() < 1e-12);
        assert!((ne.lon - 123.0).abs() < 1e-12);
        let mid = d.cell_latlon(41, 34).unwrap();
        let mid2 = d.cell_latlon(42, 35).unwrap();
        // the lattice has an even number of rows/cols, so the centre lies between cells
        assert!(((mid.lat + mid2.lat) / 2.0 - (sw.lat + ne.lat) / 2.0).abs() < 1e-12);
        assert!(((mid.lon + mid2.lon) / 2.0 - (sw.lon + ne.lon) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_cell_is_error() {
        let d = toy();
        assert!(d.cell_latlon(3, 0).is_err());
        assert!(d.cell_latlon(0, 3).is_err());
    }

    #[test]
    fn text_round_trip() {
        let d = toy();
        let back = GridDomain::from_text(&d.to_text()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn truncated_text_is_rejected() {
        assert!(GridDomain::from_text("2 2 22 120 0.1\n1 2 3").is_err());
        assert!(GridDomain::from_text("2 2 22 120 0.1\n1 2 3 4 5").is_err());
    }
}
