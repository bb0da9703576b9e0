use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cyclone_pp::augment::DEFAULT_NOISE_SCALE;
use cyclone_pp::evaluation::{DEFAULT_MAP_CUTOFF, DEFAULT_RELIABILITY_BINS, EXTREME_THRESHOLD_MM};
use cyclone_pp::pipeline::{self, parse_targets, AugmentOptions, EvaluateOptions, Precision};
use cyclone_pp::synth::{DomainSpec, ScenarioSpec};
use cyclone_pp::{ModelConfig, Variant};

const THREADS_ENV: &str = "CYCLONE_PP_THREADS";

/// Ensemble post-processing of tropical-cyclone precipitation forecasts.
#[derive(Parser, Debug)]
#[command(name = "cyclone-pp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic scenario.
    Generate {
        /// JSON scenario spec; fields left out take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        n_reports: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate and noise-inject every original report of a scenario.
    Augment {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NOISE_SCALE)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant on the reports preceding a target.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        target: u32,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast a target from a checkpoint, or from the raw members.
    Predict {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        target: u32,
        /// Output directory of `train`; required unless --variant members.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = EXTREME_THRESHOLD_MM)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MAP_CUTOFF)]
        cutoff: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling-origin forecasts of several targets scored against Members.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated trained variants.
        #[arg(long, value_delimiter = ',', default_value = "cnn,cnn-all")]
        variants: Vec<Variant>,
        /// `6..11`, `6,8,10` or a single index.
        #[arg(long, default_value = "6..11")]
        targets: String,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = EXTREME_THRESHOLD_MM)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MAP_CUTOFF)]
        cutoff: f64,
        #[arg(long, default_value_t = DEFAULT_RELIABILITY_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_NOISE_SCALE)]
    eta: f64,
    #[arg(long, default_value = "f64")]
    precision: Precision,
}

fn load_spec(path: Option<&Path>) -> Result<ScenarioSpec> {
    match path {
        None => Ok(ScenarioSpec::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .with_context(|| format!("{THREADS_ENV}={value:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate {
            spec,
            seed,
            rows,
            cols,
            n_reports,
            out,
        } => {
            let mut spec = load_spec(spec.as_deref())?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.domain = DomainSpec {
                rows: rows.unwrap_or(spec.domain.rows),
                cols: cols.unwrap_or(spec.domain.cols),
            };
            if let Some(n) = n_reports {
                spec.n_reports = n;
            }
            pipeline::generate(&spec, &out)?;
        }
        Command::Augment {
            scenario,
            eta,
            seed,
            out,
        } => pipeline::augment(&scenario, &AugmentOptions { eta, seed }, &out)?,
        Command::Train {
            scenario,
            variant,
            target,
            model,
            out,
        } => {
            if variant == Variant::Members {
                bail!("the members baseline has no parameters to train; use `predict --variant members`");
            }
            let config = ModelConfig {
                epochs: model.epochs,
                eta: model.eta,
                ..ModelConfig::for_variant(variant, model.seed)
            };
            let opts = pipeline::TrainOptions {
                config,
                target,
                precision: model.precision,
            };
            pipeline::train(&scenario, &opts, &out)?;
        }
        Command::Predict {
            scenario,
            target,
            model,
            variant,
            threshold,
            cutoff,
            out,
        } => {
            match (&model, variant) {
                (None, Some(Variant::Members)) | (Some(_), None) => {}
                (Some(_), Some(Variant::Members)) => bail!("--variant members takes no --model"),
                (None, _) => bail!("--model is required unless --variant members"),
                (Some(_), Some(_)) => {}
            }
            let opts = pipeline::PredictOptions {
                target,
                model,
                threshold,
                cutoff,
            };
            pipeline::predict(&scenario, &opts, &out)?;
        }
        Command::Evaluate {
            scenario,
            variants,
            targets,
            model,
            threshold,
            cutoff,
            bins,
            out,
        } => {
            let opts = EvaluateOptions {
                variants,
                targets: parse_targets(&targets)?,
                seed: model.seed,
                epochs: model.epochs,
                eta: model.eta,
                precision: model.precision,
                threshold,
                cutoff,
                bins,
            };
            pipeline::evaluate(&scenario, &opts, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
