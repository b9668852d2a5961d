//! `mieval`: dataset synthesis, segmentation training and inference, case
//! classification, clinical cross-validation and metric evaluation.

mod commands;
mod config;
mod data;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mieval::segnet::SegRole;
use mieval::synth::PhantomConfig;

use crate::commands::{ClassifyMode, SynthConfig};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "mieval", version, about = "Myocardial infarction segmentation and classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Anatomical,
    Pathological,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Clinical,
    Image,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train the anatomical or pathological segmentation network.
    TrainSeg {
        #[arg(long, value_enum)]
        role: RoleArg,
        #[command(flatten)]
        common: Common,
    },
    /// Segment cases with both networks and write merged label maps.
    Predict {
        /// Comma-separated case ids; all cases when omitted.
        #[arg(long, value_delimiter = ',')]
        cases: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Classify cases as normal or pathological.
    Classify {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[command(flatten)]
        common: Common,
    },
    /// Score predicted label maps against the ground truth.
    Evaluate {
        /// Directory of `<case>.nii.gz` predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Dataset root holding the ground-truth contours.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Stratified k-fold cross-validation of the clinical classifier.
    Crossval {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the clinical classifier on all labeled cases.
    FitClinical {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset of phantom cases.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        pathological: usize,
        #[arg(long, default_value_t = 5)]
        normal: usize,
        #[arg(long, default_value_t = 6)]
        slices: usize,
        /// In-plane size in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

fn resolve(common: &Common, truth: Option<&Path>) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(root) = truth {
        cfg.dataset.root = Some(root.to_path_buf());
    }
    cfg.set_seed(common.seed.unwrap_or(cfg.seed));
    cfg.validate()?;
    cfg.dataset_root()?;
    Ok(cfg)
}

fn dispatch(cmd: Command) -> CliResult<PathBuf> {
    match cmd {
        Command::TrainSeg { role, common } => {
            let role = match role {
                RoleArg::Anatomical => SegRole::Anatomical,
                RoleArg::Pathological => SegRole::Pathological,
            };
            commands::train_seg(&resolve(&common, None)?, role)
        }
        Command::Predict { cases, common } => commands::predict(&resolve(&common, None)?, &cases),
        Command::Classify { mode, common } => {
            let mode = match mode {
                ModeArg::Clinical => ClassifyMode::Clinical,
                ModeArg::Image => ClassifyMode::Image,
                ModeArg::Both => ClassifyMode::Both,
            };
            commands::classify(&resolve(&common, None)?, mode)
        }
        Command::Evaluate {
            predictions,
            truth,
            common,
        } => commands::evaluate(&resolve(&common, truth.as_deref())?, predictions.as_deref()),
        Command::Crossval { common } => commands::crossval_cmd(&resolve(&common, None)?),
        Command::FitClinical { common } => commands::fit_clinical(&resolve(&common, None)?),
        Command::Synth {
            out,
            seed,
            pathological,
            normal,
            slices,
            size,
        } => {
            if slices == 0 || size < 8 {
                return Err(CliError::config("--slices/--size", "need at least 1 slice and 8 pixels"));
            }
            let cfg = SynthConfig {
                seed,
                pathological,
                normal,
                phantom: PhantomConfig {
                    slices,
                    height: size,
                    width: size,
                    ..PhantomConfig::default()
                },
            };
            commands::synth(&out, &cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(manifest) => {
            println!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
