//! `ctxspot`: synthetic data, training, inference, evaluation and highlight
//! reels for temporally-aware action spotting.

mod commands;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctxspot_core::Error as CoreError;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "ctxspot", version, about = "Action spotting with a context-aware segmentation loss")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// JSON model/metric configuration; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// JSON generator spec; defaults apply when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the time-shift encoding of one annotation file as CSV.
    Encode {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on `<data>/train`, selecting on `<data>/val`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also write the final model's matchings on the training chunks.
        #[arg(long)]
        dump_matchings: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spot actions with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// A feature file or a directory of them.
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        inference: InferenceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against annotations.
    Evaluate {
        /// An annotation file or a directory of them.
        #[arg(long)]
        gt: PathBuf,
        /// A prediction file or a directory of them.
        #[arg(long)]
        pred: PathBuf,
        /// Per-class confidence thresholds for the curves, comma separated.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build highlight reels and the opportunity precision table.
    Highlights {
        #[arg(long)]
        model_output: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Random points for the pointwise loss check.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Initialization seeds of the tiny model.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        model_seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per segmentation weight and report Average-mAP for each.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct InferenceArgs {
    /// Minimum confidence of a kept spot.
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    /// Same-class spots closer than this are merged.
    #[arg(long)]
    pub dedup_seconds: Option<f64>,
}

/// Failure with a fixed exit code, raised by the front end itself.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;
pub const EXIT_SOFTWARE: u8 = 70;
pub const EXIT_IO: u8 = 74;

fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return (f.code, f.kind);
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Io { .. } => (EXIT_IO, "io"),
                CoreError::Parse { .. } => (EXIT_DATA, "parse"),
                CoreError::InvalidConfig(_) => (EXIT_DATA, "invalid_config"),
                CoreError::Divergence { .. } => (EXIT_SOFTWARE, "divergence"),
                CoreError::NonFinite(_) => (EXIT_SOFTWARE, "non_finite"),
                CoreError::Checkpoint(_) => (EXIT_DATA, "checkpoint"),
                CoreError::NotEvaluable(_) => (EXIT_DATA, "not_evaluable"),
                CoreError::StaleTrace => (EXIT_SOFTWARE, "internal"),
                _ => (EXIT_DATA, "invalid_input"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (EXIT_IO, "io");
        }
    }
    (EXIT_SOFTWARE, "internal")
}

fn report(code: u8, kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "code": code, "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => {
                    report(EXIT_USAGE, "unknown_command", e.kind().to_string())
                }
                _ => report(EXIT_USAGE, "usage", e.to_string().trim().to_string()),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            report(code, kind, format!("{e:#}"))
        }
    }
}
