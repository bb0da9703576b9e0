//! Scenario directories, CSV grids, predictions and run manifests.
//!
//! A scenario directory holds
//!
//! ```text
//! domain.txt             grid header plus altitude rows
//! spec.json              generator spec (generated scenarios only)
//! track.csv              index,lat,lon per report
//! report_0015n/          one directory per report, named by tenths of the
//!   meta.json            index with an `n` suffix for noise copies
//!   member_01.csv .. member_20.csv
//!   obs.csv              absent for forecast-only reports
//! manifest.json
//! ```
//!
//! Grids are written south row first, one CSV line per row, using the
//! shortest representation that reads back to the same float.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{GridDomain, LatLon};
use crate::report::{Origin, Report, ReportIndex, N_MEMBERS};
use crate::scalar::Scalar;
use crate::scoring::GaussianField;
use crate::synth::ScenarioSpec;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DOMAIN_FILE: &str = "domain.txt";
pub const SPEC_FILE: &str = "spec.json";
pub const TRACK_FILE: &str = "track.csv";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Builds a directory under a temporary sibling name and moves it into
/// place only once `fill` succeeds. An existing target is replaced only if
/// it is itself a stage output (it carries a manifest).
pub fn write_dir_atomic(out: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let name = out
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no directory name", out.display())))?;
    let tmp = parent.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if out.exists() {
        if !out.join(MANIFEST_FILE).is_file() {
            let _ = fs::remove_dir_all(&tmp);
            return Err(Error::InvalidArgument(format!(
                "{} exists and is not a stage output; refusing to replace it",
                out.display()
            )));
        }
        fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    fs::rename(&tmp, out).map_err(|e| Error::io(out, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn grid_to_csv<T: Scalar>(field: &Field<T>) -> String {
    let mut out = String::with_capacity(field.len() * 8);
    for row in field.as_slice().chunks(field.cols()) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn grid_from_csv<T: Scalar>(text: &str, path: &Path) -> Result<Field<T>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad number {tok:?}", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, format!("line {}: non-finite value", i + 1)));
            }
            data.push(T::lit(v));
        }
        let n = data.len() - before;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::parse(path, format!("line {} has {n} values, expected {c}", i + 1)))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse(path, "empty grid"))?;
    Field::from_vec(rows, cols, data)
}

pub fn write_grid<T: Scalar>(path: &Path, field: &Field<T>) -> Result<()> {
    fs::write(path, grid_to_csv(field)).map_err(|e| Error::io(path, e))
}

pub fn read_grid<T: Scalar>(path: &Path) -> Result<Field<T>> {
    grid_from_csv(&read_text(path)?, path)
}

/// `report_0010`, `report_0015`, `report_0010n`, ...
pub fn report_dir_name(index: ReportIndex, origin: Origin) -> String {
    format!(
        "report_{:04}{}",
        index.tenths(),
        if origin.is_noise() { "n" } else { "" }
    )
}

/// Index and noise flag encoded in a report directory name.
pub fn parse_report_dir_name(name: &str) -> Option<(ReportIndex, bool)> {
    let rest = name.strip_prefix("report_")?;
    let (digits, noise) = match rest.strip_suffix('n') {
        Some(d) => (d, true),
        None => (rest, false),
    };
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((ReportIndex::from_tenths(digits.parse().ok()?).ok()?, noise))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportMeta {
    index: String,
    origin: Origin,
    tc_center: LatLon,
    valid_time: i64,
    has_observation: bool,
}

pub fn write_report<T: Scalar>(dir: &Path, report: &Report<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (m, field) in report.members.iter().enumerate() {
        write_grid(&dir.join(format!("member_{:02}.csv", m + 1)), field)?;
    }
    if let Some(obs) = &report.observation {
        write_grid(&dir.join("obs.csv"), obs)?;
    }
    let meta = ReportMeta {
        index: report.index.to_string(),
        origin: report.origin,
        tc_center: report.tc_center,
        valid_time: report.valid_time,
        has_observation: report.observation.is_some(),
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

fn parse_index(s: &str, path: &Path) -> Result<ReportIndex> {
    let bad = || Error::parse(path, format!("bad report index {s:?}"));
    let (whole, half) = match s.split_once('.') {
        Some((w, "5")) => (w, 1),
        Some((w, "0")) | Some((w, "")) => (w, 0),
        None => (s, 0),
        _ => return Err(bad()),
    };
    let k: u32 = whole.parse().map_err(|_| bad())?;
    Ok(ReportIndex::from_halves(2 * k + half))
}

/// Every path opened through a [`ScenarioReader`], in order.
#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<PathBuf>>);

impl AccessLog {
    fn record(&self, path: &Path) {
        self.0.lock().expect("access log poisoned").push(path.to_path_buf());
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.0.lock().expect("access log poisoned").clone()
    }
}

/// Read access to a scenario directory. Report data is read one report at
/// a time, on request, and every opened file is logged so tests can audit
/// what a stage looked at.
#[derive(Debug)]
pub struct ScenarioReader {
    root: PathBuf,
    log: AccessLog,
}

impl ScenarioReader {
    /// Opens `root`, verifying its manifest first when `verify` is set.
    pub fn open(root: &Path, verify: bool) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::InvalidArgument(format!("{} is not a directory", root.display())));
        }
        if verify {
            verify_manifest(root)?;
        }
        Ok(ScenarioReader {
            root: root.to_path_buf(),
            log: AccessLog::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.log
    }

    fn text(&self, path: &Path) -> Result<String> {
        self.log.record(path);
        read_text(path)
    }

    pub fn domain(&self) -> Result<GridDomain> {
        let path = self.root.join(DOMAIN_FILE);
        GridDomain::from_text(&self.text(&path)?).map_err(|e| Error::parse(&path, e.to_string()))
    }

    pub fn spec(&self) -> Result<Option<ScenarioSpec>> {
        let path = self.root.join(SPEC_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let text = self.text(&path)?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::parse(&path, e.to_string()))
    }

    /// Report directories present, sorted by index then noise flag. Only
    /// directory names are inspected.
    pub fn report_entries(&self) -> Result<Vec<(ReportIndex, bool, String)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some((index, noise)) = parse_report_dir_name(&name) {
                out.push((index, noise, name));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Reads one report; the observation is loaded only if asked for.
    pub fn report<T: Scalar>(&self, name: &str, with_observation: bool) -> Result<Report<T>> {
        let dir = self.root.join(name);
        let meta_path = dir.join("meta.json");
        let meta: ReportMeta = serde_json::from_str(&self.text(&meta_path)?)
            .map_err(|e| Error::parse(&meta_path, e.to_string()))?;
        let mut members = Vec::with_capacity(N_MEMBERS);
        for m in 1..=N_MEMBERS {
            let path = dir.join(format!("member_{m:02}.csv"));
            members.push(grid_from_csv(&self.text(&path)?, &path)?);
        }
        let observation = if with_observation && meta.has_observation {
            let path = dir.join("obs.csv");
            Some(grid_from_csv(&self.text(&path)?, &path)?)
        } else {
            None
        };
        Report::new(
            parse_index(&meta.index, &meta_path)?,
            meta.origin,
            members,
            observation,
            meta.tc_center,
            meta.valid_time,
        )
    }

    /// Every report with its observation.
    pub fn all_reports<T: Scalar>(&self) -> Result<Vec<Report<T>>> {
        self.report_entries()?
            .iter()
            .map(|(_, _, name)| self.report(name, true))
            .collect()
    }

    /// What a forecast for original report `k` may see: the originals
    /// before `k` in full, and report `k` without its observation.
    pub fn rolling_inputs<T: Scalar>(&self, k: u32) -> Result<(Vec<Report<T>>, Report<T>)> {
        let target = ReportIndex::integer(k);
        let mut history = Vec::new();
        let mut found = None;
        for (index, noise, name) in self.report_entries()? {
            if noise || !index.is_integer() {
                continue;
            }
            if index < target {
                history.push(self.report(&name, true)?);
            } else if index == target {
                found = Some(self.report(&name, false)?);
            }
        }
        let target_report = found.ok_or_else(|| {
            Error::InvalidArgument(format!("{} has no report {k}", self.root.display()))
        })?;
        Ok((history, target_report))
    }
}

pub fn track_csv(reports: &[(ReportIndex, LatLon)]) -> String {
    let mut out = String::from("index,lat,lon\n");
    for (i, c) in reports {
        writeln!(out, "{i},{},{}", c.lat, c.lon).expect("write to string");
    }
    out
}

/// Writes domain, reports, track, optional spec and a manifest into
/// `dir`, which must already exist.
pub fn write_scenario_contents<T: Scalar>(
    dir: &Path,
    domain: &GridDomain,
    reports: &[Report<T>],
    spec: Option<&ScenarioSpec>,
) -> Result<()> {
    let path = dir.join(DOMAIN_FILE);
    fs::write(&path, domain.to_text()).map_err(|e| Error::io(&path, e))?;
    if let Some(spec) = spec {
        let path = dir.join(SPEC_FILE);
        fs::write(&path, serde_json::to_string_pretty(spec)?).map_err(|e| Error::io(&path, e))?;
    }
    let mut track: Vec<(ReportIndex, LatLon)> = Vec::new();
    for r in reports {
        write_report(&dir.join(report_dir_name(r.index, r.origin)), r)?;
        if !track.iter().any(|(i, _)| *i == r.index) {
            track.push((r.index, r.tc_center));
        }
    }
    track.sort_by_key(|(i, _)| *i);
    let path = dir.join(TRACK_FILE);
    fs::write(&path, track_csv(&track)).map_err(|e| Error::io(&path, e))
}

pub fn predictions_to_csv<T: Scalar>(field: &GaussianField<T>) -> String {
    let mut out = String::from("row,col,mu,sigma\n");
    let cols = field.cols();
    for (i, (m, s)) in field.mu.as_slice().iter().zip(field.sigma.as_slice()).enumerate() {
        writeln!(out, "{},{},{m},{s}", i / cols, i % cols).expect("write to string");
    }
    out
}

pub fn predictions_from_csv<T: Scalar>(text: &str, path: &Path, rows: usize, cols: usize) -> Result<GaussianField<T>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("row,col,mu,sigma") {
        return Err(Error::parse(path, "expected header row,col,mu,sigma"));
    }
    let mut mu = vec![None; rows * cols];
    let mut sigma = vec![T::zero(); rows * cols];
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| Error::parse(path, format!("line {}: {m}", n + 2));
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let r: usize = parts[0].parse().map_err(|_| bad("bad row"))?;
        let c: usize = parts[1].parse().map_err(|_| bad("bad col"))?;
        let m: f64 = parts[2].parse().map_err(|_| bad("bad mu"))?;
        let s: f64 = parts[3].parse().map_err(|_| bad("bad sigma"))?;
        if r >= rows || c >= cols {
            return Err(bad("cell outside the domain"));
        }
        mu[r * cols + c] = Some(T::lit(m));
        sigma[r * cols + c] = T::lit(s);
    }
    let mu: Vec<T> = mu
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| Error::parse(path, "not every cell has a prediction"))?;
    GaussianField::new(Field::from_vec(rows, cols, mu)?, Field::from_vec(rows, cols, sigma)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// SHA-256 of every file under `dir` keyed by `/`-separated relative path,
/// leaving out the manifest itself.
pub fn hash_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                let rel = path.strip_prefix(base).expect("walk stays under base");
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                if key != MANIFEST_FILE {
                    out.insert(key, hash_file(&path)?);
                }
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

/// Combined digest of a hash tree.
pub fn tree_digest(tree: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in tree {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([b'\n']);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub engine_version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Input path to its content digest (a file hash or a tree digest).
    pub inputs: BTreeMap<String, String>,
    /// Output file (relative to the output directory) to its hash.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(stage: &str, seed: Option<u64>, config: serde_json::Value) -> Result<Self> {
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(RunManifest {
            stage: stage.to_string(),
            engine_version: ENGINE_VERSION.to_string(),
            seed,
            config_hash,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_time_s: 0.0,
        })
    }

    /// Records a file or directory input by content digest.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = if path.is_dir() {
            tree_digest(&hash_tree(path)?)
        } else {
            hash_file(path)?
        };
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Hashes `dir`'s contents into `outputs` and writes the manifest there.
    pub fn finish(mut self, dir: &Path, started: Instant) -> Result<Self> {
        self.outputs = hash_tree(dir)?;
        self.wall_time_s = started.elapsed().as_secs_f64();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self)?).map_err(|e| Error::io(&path, e))?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::parse(&path, e.to_string()))
    }
}

/// Re-hashes `dir` against its manifest: same file set, same hashes.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let manifest = RunManifest::load(dir)?;
    let actual = hash_tree(dir)?;
    for (file, hash) in &manifest.outputs {
        match actual.get(file) {
            None => return Err(Error::Integrity(format!("{}: {file} is missing", dir.display()))),
            Some(h) if h != hash => {
                return Err(Error::Integrity(format!("{}: {file} was modified", dir.display())))
            }
            _ => {}
        }
    }
    if let Some(extra) = actual.keys().find(|k| !manifest.outputs.contains_key(*k)) {
        return Err(Error::Integrity(format!(
            "{}: {extra} is not listed in the manifest",
            dir.display()
        )));
    }
    Ok(manifest)
}
