//! The five file-to-file stages: generate, augment, train, predict and
//! evaluate. Each reads verified inputs, writes its output directory
//! atomically and finishes it with a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{build_augmented_set, DEFAULT_NOISE_SCALE};
use crate::error::{Error, Result};
use crate::evaluation::{
    crpss_by_stratum, exceedance_map, exceedance_probability, median_crpss, reliability_diagram,
    skill_rows, SkillRow, DEFAULT_MAP_CUTOFF, DEFAULT_RELIABILITY_BINS, EXTREME_THRESHOLD_MM,
};
use crate::grid::{GridDomain, LatLon, Terrain};
use crate::io::{
    hash_file, predictions_to_csv, write_dir_atomic, write_scenario_contents, RunManifest,
    verify_manifest, ScenarioReader,
};
use crate::models::checkpoint::Checkpoint;
use crate::models::{predict_members_baseline, rolling_origin_run, train_model, ModelConfig, Variant};
use crate::report::{Origin, RainCategory, Report, ReportIndex};
use crate::scalar::Scalar;
use crate::scoring::GaussianField;
use crate::synth::{generate_scenario, synthetic_domain, ScenarioSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::InvalidArgument(format!("precision {s:?}; expected f32 or f64"))),
        }
    }
}

/// Parses `6..11` (inclusive), `6,7,9` or a single index.
pub fn parse_targets(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::InvalidArgument(format!("bad target list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn to_value<S: Serialize>(v: &S) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn generate(spec: &ScenarioSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    let started = Instant::now();
    let domain = synthetic_domain(spec.domain.rows, spec.domain.cols)?;
    let scenario = generate_scenario(spec, &domain)?;
    write_dir_atomic(out, |tmp| {
        write_scenario_contents(tmp, &domain, &scenario.reports, Some(spec))?;
        RunManifest::new("generate", Some(spec.seed), to_value(spec)?)?.finish(tmp, started)?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub eta: f64,
    pub seed: u64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            eta: DEFAULT_NOISE_SCALE,
            seed: 0,
        }
    }
}

/// Augments every original report of a scenario.
pub fn augment(scenario: &Path, opts: &AugmentOptions, out: &Path) -> Result<()> {
    let started = Instant::now();
    let reader = ScenarioReader::open(scenario, true)?;
    let domain = reader.domain()?;
    let originals: Vec<Report<f64>> = reader
        .all_reports()?
        .into_iter()
        .filter(|r: &Report<f64>| r.origin == Origin::Original)
        .collect();
    let set = build_augmented_set(&originals, opts.eta, opts.seed)?;
    write_dir_atomic(out, |tmp| {
        write_scenario_contents(tmp, &domain, &set.reports, None)?;
        let mut m = RunManifest::new("augment", Some(opts.seed), to_value(opts)?)?;
        m.add_input(scenario)?;
        m.finish(tmp, started)?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub config: ModelConfig,
    pub target: u32,
    pub precision: Precision,
}

/// Trains on the originals preceding `target` with the per-target seed a
/// rolling run would use, and saves a checkpoint.
pub fn train(scenario: &Path, opts: &TrainOptions, out: &Path) -> Result<()> {
    if !opts.config.variant.is_trainable() {
        return Err(Error::InvalidArgument(format!(
            "{} is not trainable; predict it directly",
            opts.config.variant
        )));
    }
    match opts.precision {
        Precision::F32 => train_as::<f32>(scenario, opts, out),
        Precision::F64 => train_as::<f64>(scenario, opts, out),
    }
}

fn train_as<T: Scalar>(scenario: &Path, opts: &TrainOptions, out: &Path) -> Result<()> {
    let started = Instant::now();
    let reader = ScenarioReader::open(scenario, true)?;
    let domain = reader.domain()?;
    let (history, _) = reader.rolling_inputs::<T>(opts.target)?;
    let config = ModelConfig {
        seed: opts.config.seed_for_target(opts.target),
        ..opts.config.clone()
    };
    let model = train_model(&config, &history, &domain)?;
    log::info!(
        "{} target {}: loss {:.4} -> {:.4} over {} steps",
        config.variant,
        opts.target,
        model.summary.initial_loss,
        model.summary.final_loss,
        model.summary.steps
    );
    write_dir_atomic(out, |tmp| {
        Checkpoint::from_model(&model).save(&tmp.join(CHECKPOINT_FILE))?;
        let mut m = RunManifest::new("train", Some(opts.config.seed), to_value(opts)?)?;
        m.add_input(scenario)?;
        m.finish(tmp, started)?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub target: u32,
    /// Checkpoint directory; `None` predicts the Members baseline.
    pub model: Option<PathBuf>,
    pub threshold: f64,
    pub cutoff: f64,
}

/// Forecasts report `target` from its members without reading its
/// observation or any later report.
pub fn predict(scenario: &Path, opts: &PredictOptions, out: &Path) -> Result<()> {
    let precision = match &opts.model {
        Some(dir) => {
            verify_manifest(dir)?;
            Checkpoint::load(&dir.join(CHECKPOINT_FILE))?.scalar.parse()?
        }
        None => Precision::F64,
    };
    match precision {
        Precision::F32 => predict_as::<f32>(scenario, opts, out),
        Precision::F64 => predict_as::<f64>(scenario, opts, out),
    }
}

fn predict_as<T: Scalar>(scenario: &Path, opts: &PredictOptions, out: &Path) -> Result<()> {
    let started = Instant::now();
    let reader = ScenarioReader::open(scenario, true)?;
    let domain = reader.domain()?;
    let (history, report) = reader.rolling_inputs::<T>(opts.target)?;
    let forecast = match &opts.model {
        None => predict_members_baseline(&report)?,
        Some(dir) => {
            let model = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?.into_model::<T>()?;
            let mut track: Vec<LatLon> = history.iter().map(|r| r.tc_center).collect();
            track.push(report.tc_center);
            model.predict(&report, &track, &domain)?
        }
    };
    write_dir_atomic(out, |tmp| {
        write_text(tmp, PREDICTIONS_FILE, &predictions_to_csv(&forecast))?;
        write_text(
            tmp,
            "exceedance_map.csv",
            &exceedance_csv(&forecast.cast(), &domain, opts.threshold, opts.cutoff)?,
        )?;
        let mut m = RunManifest::new("predict", None, to_value(opts)?)?;
        m.add_input(scenario)?;
        if let Some(dir) = &opts.model {
            m.inputs.insert(dir.display().to_string(), hash_file(&dir.join(CHECKPOINT_FILE))?);
        }
        m.finish(tmp, started)?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    /// Trained variants to score; Members is always run as the reference.
    pub variants: Vec<Variant>,
    pub targets: Vec<u32>,
    pub seed: u64,
    pub epochs: usize,
    pub eta: f64,
    pub precision: Precision,
    pub threshold: f64,
    pub cutoff: f64,
    pub bins: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            variants: vec![Variant::Cnn, Variant::CnnAll],
            targets: (6..=11).collect(),
            seed: 0,
            epochs: 100,
            eta: DEFAULT_NOISE_SCALE,
            precision: Precision::F64,
            threshold: EXTREME_THRESHOLD_MM,
            cutoff: DEFAULT_MAP_CUTOFF,
            bins: DEFAULT_RELIABILITY_BINS,
        }
    }
}

/// Headline numbers of one variant over all evaluated targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub variant: Variant,
    /// Median CRPSS over plain land cells observed Heavy or beyond.
    pub median_crpss_plain_heavy: Option<f64>,
    pub median_crpss_all: Option<f64>,
    pub mace: Option<f64>,
}

impl EvaluateOptions {
    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut variants = vec![Variant::Members];
        variants.extend(self.variants.iter().filter(|&&v| v != Variant::Members));
        variants
            .into_iter()
            .map(|v| ModelConfig {
                epochs: self.epochs,
                eta: self.eta,
                ..ModelConfig::for_variant(v, self.seed)
            })
            .collect()
    }
}

pub fn is_plain_heavy(r: &SkillRow) -> bool {
    r.terrain == Terrain::Plain && matches!(r.category, RainCategory::Heavy | RainCategory::BeyondHeavy)
}

/// Rolling-origin forecasts scored against Members, in memory.
pub fn score_rolling<T: Scalar>(
    reports: &[Report<T>],
    domain: &GridDomain,
    opts: &EvaluateOptions,
) -> Result<(Vec<VariantScore>, Vec<VariantTables>)> {
    let configs = opts.configs();
    let run = rolling_origin_run(&configs, reports, domain, &opts.targets)?;
    let mut scores = Vec::new();
    let mut tables = Vec::new();
    for config in &configs {
        let v = config.variant;
        let mut t = VariantTables {
            variant: v,
            skill: Vec::new(),
            maps: Vec::new(),
            probabilities: Vec::new(),
            outcomes: Vec::new(),
        };
        for &k in &opts.targets {
            let (Some(pred), Some(reference)) = (run.get(v, k), run.get(Variant::Members, k)) else {
                continue;
            };
            let obs = reports
                .iter()
                .find(|r| r.index == ReportIndex::integer(k))
                .ok_or_else(|| Error::InvalidArgument(format!("no report {k}")))?
                .observation()?;
            let f = pred.forecast.cast::<f64>();
            let obs64 = obs.cast::<f64>();
            t.skill
                .extend(skill_rows(ReportIndex::integer(k), &f, &reference.forecast.cast(), &obs64, domain)?);
            let p = exceedance_probability(&f, opts.threshold);
            for i in domain.land_cells() {
                t.probabilities.push(p.as_slice()[i]);
                t.outcomes.push(obs64.as_slice()[i]);
            }
            t.maps.push((k, f));
        }
        let mace = reliability_diagram(&t.probabilities, &t.outcomes, opts.threshold, opts.bins)?
            .mean_abs_calibration_error();
        scores.push(VariantScore {
            variant: v,
            median_crpss_plain_heavy: median_crpss(&t.skill, is_plain_heavy),
            median_crpss_all: median_crpss(&t.skill, |_| true),
            mace,
        });
        tables.push(t);
    }
    Ok((scores, tables))
}

/// Per-variant material behind the evaluation files.
#[derive(Debug, Clone)]
pub struct VariantTables {
    pub variant: Variant,
    pub skill: Vec<SkillRow>,
    pub maps: Vec<(u32, GaussianField<f64>)>,
    pub probabilities: Vec<f64>,
    pub outcomes: Vec<f64>,
}

pub fn evaluate(scenario: &Path, opts: &EvaluateOptions, out: &Path) -> Result<()> {
    let started = Instant::now();
    let reader = ScenarioReader::open(scenario, true)?;
    let domain = reader.domain()?;
    let originals: Vec<Report<f64>> = reader
        .all_reports()?
        .into_iter()
        .filter(|r: &Report<f64>| r.origin == Origin::Original)
        .collect();
    let (scores, tables) = match opts.precision {
        Precision::F64 => score_rolling(&originals, &domain, opts)?,
        Precision::F32 => {
            let r32: Vec<Report<f32>> = originals.iter().map(Report::cast).collect();
            score_rolling(&r32, &domain, opts)?
        }
    };
    write_dir_atomic(out, |tmp| {
        for t in &tables {
            let dir = tmp.join(t.variant.label());
            fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            for (k, f) in &t.maps {
                write_text(&dir, &format!("predictions_{k}.csv"), &predictions_to_csv(f))?;
                write_text(
                    &dir,
                    &format!("exceedance_map_{k}.csv"),
                    &exceedance_csv(f, &domain, opts.threshold, opts.cutoff)?,
                )?;
            }
            let rb = reliability_diagram(&t.probabilities, &t.outcomes, opts.threshold, opts.bins)?;
            write_text(&dir, "reliability.csv", &reliability_csv(&rb))?;
            if t.variant != Variant::Members && !t.skill.is_empty() {
                write_text(&dir, "skill_table.csv", &skill_csv(&t.skill))?;
                write_text(&dir, "crpss_summary.csv", &stratum_csv(&t.skill)?)?;
            }
        }
        write_text(tmp, "scores.json", &serde_json::to_string_pretty(&scores)?)?;
        let mut m = RunManifest::new("evaluate", Some(opts.seed), to_value(opts)?)?;
        m.add_input(scenario)?;
        m.finish(tmp, started)?;
        Ok(())
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn exceedance_csv(f: &GaussianField<f64>, domain: &GridDomain, threshold: f64, cutoff: f64) -> Result<String> {
    let p = exceedance_probability(f, threshold);
    let mut s = String::from("row,col,lat,lon,p\n");
    for c in exceedance_map(&p, domain, cutoff)? {
        let ll = domain.cell_latlon(c.row, c.col)?;
        writeln!(s, "{},{},{},{},{}", c.row, c.col, ll.lat, ll.lon, c.p).expect("write to string");
    }
    Ok(s)
}

pub fn skill_csv(rows: &[SkillRow]) -> String {
    let mut s = String::from("report,row,col,terrain,category,crps_model,crps_ref,crpss\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.report_index,
            r.row,
            r.col,
            r.terrain.label(),
            r.category.label(),
            r.crps_model,
            r.crps_ref,
            opt(r.crpss)
        )
        .expect("write to string");
    }
    s
}

pub fn stratum_csv(rows: &[SkillRow]) -> Result<String> {
    let mut s = String::from("terrain,category,n,lower_whisker,q1,median,q3,upper_whisker\n");
    for st in crpss_by_stratum(rows)? {
        let (t, c) = (st.terrain.label(), st.category.label());
        match st.summary {
            Some(b) => writeln!(
                s,
                "{t},{c},{},{},{},{},{},{}",
                b.n, b.lower_whisker, b.q1, b.median, b.q3, b.upper_whisker
            ),
            None => writeln!(s, "{t},{c},0,,,,,"),
        }
        .expect("write to string");
    }
    Ok(s)
}

pub fn reliability_csv(rb: &crate::evaluation::ReliabilityBins) -> String {
    let mut s = String::from("lower,upper,count,mean_probability,observed_frequency\n");
    for b in &rb.bins {
        writeln!(
            s,
            "{},{},{},{},{}",
            b.lower,
            b.upper,
            b.count,
            opt(b.mean_probability),
            opt(b.observed_frequency)
        )
        .expect("write to string");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::hash_tree;
    use crate::synth::DomainSpec;

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            seed: 4,
            n_reports: 5,
            domain: DomainSpec { rows: 10, cols: 8 },
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn target_lists() {
        assert_eq!(parse_targets("6..11").unwrap(), vec![6, 7, 8, 9, 10, 11]);
        assert_eq!(parse_targets("9,3,3").unwrap(), vec![3, 9]);
        assert!(parse_targets("4..2").is_err());
        assert!(parse_targets("0").is_err());
        assert!(parse_targets("x").is_err());
    }

    #[test]
    fn stages_chain_and_verify() {
        let tmp = tempfile::tempdir().unwrap();
        let p = |s: &str| tmp.path().join(s);
        generate(&spec(), &p("scn")).unwrap();
        augment(&p("scn"), &AugmentOptions::default(), &p("aug")).unwrap();
        assert_eq!(ScenarioReader::open(&p("aug"), true).unwrap().report_entries().unwrap().len(), 18);

        let mut config = ModelConfig::for_variant(Variant::CnnAll, 1);
        config.epochs = 3;
        let topts = TrainOptions { config, target: 4, precision: Precision::F32 };
        train(&p("scn"), &topts, &p("model")).unwrap();
        let popts = PredictOptions { target: 4, model: Some(p("model")), threshold: 200.0, cutoff: 0.5 };
        predict(&p("scn"), &popts, &p("pred")).unwrap();
        predict(&p("scn"), &PredictOptions { model: None, ..popts }, &p("pred_members")).unwrap();

        let eopts = EvaluateOptions { targets: vec![3, 5], epochs: 2, ..EvaluateOptions::default() };
        evaluate(&p("scn"), &eopts, &p("eval")).unwrap();
        for d in ["scn", "aug", "model", "pred", "pred_members", "eval"] {
            verify_manifest(&p(d)).unwrap();
        }
        let files = hash_tree(&p("eval")).unwrap();
        for f in ["cnn-all/skill_table.csv", "cnn/crpss_summary.csv", "members/reliability.csv", "cnn/exceedance_map_5.csv", "scores.json"] {
            assert!(files.contains_key(f), "{f}");
        }
        assert!(!files.contains_key("members/skill_table.csv"));
    }

    #[test]
    fn members_cannot_be_trained() {
        let tmp = tempfile::tempdir().unwrap();
        generate(&spec(), &tmp.path().join("scn")).unwrap();
        let topts = TrainOptions {
            config: ModelConfig::for_variant(Variant::Members, 0),
            target: 4,
            precision: Precision::F64,
        };
        assert!(train(&tmp.path().join("scn"), &topts, &tmp.path().join("m")).is_err());
        assert!(!tmp.path().join("m").exists());
    }
}
