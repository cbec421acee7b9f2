//! Command-line driver for the pseudo-Zernike trigger pipeline.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 data/format/I/O errors,
//! 4 acceptance-gate failure (`fxp-run --gate`).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pztrigger_core::error::Error as CoreError;

#[derive(Parser)]
#[command(name = "pztrigger", version, about = "Gamma/hadron trigger workflow: synthetic events, pseudo-Zernike features, SVM training and a fixed-point trigger emulation")]
struct Cli {
    /// TOML config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CameraArgs {
    /// Geometry JSON file; mutually exclusive with --rings/--pitch.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Hexagonal rings around the central pixel.
    #[arg(long)]
    rings: Option<u32>,
    /// Center-to-center pixel distance.
    #[arg(long)]
    pitch: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct CleaningArgs {
    /// Core tail-cut threshold in photo-electrons.
    #[arg(long)]
    core_thr: Option<f64>,
    /// Boundary tail-cut threshold in photo-electrons.
    #[arg(long)]
    boundary_thr: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic labeled events as JSON Lines.
    Gen {
        #[command(flatten)]
        camera: CameraArgs,
        /// Number of gamma events.
        #[arg(long, default_value_t = 100)]
        gammas: u64,
        /// Number of hadron events.
        #[arg(long, default_value_t = 100)]
        hadrons: u64,
        /// Master seed; per-event seeds derive from it.
        #[arg(long)]
        seed: Option<u64>,
        /// Output events file (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Also write the camera geometry JSON here.
        #[arg(long)]
        write_geometry: Option<PathBuf>,
    },
    /// Clean events and extract pseudo-Zernike feature vectors to CSV.
    Extract {
        #[command(flatten)]
        camera: CameraArgs,
        #[command(flatten)]
        cleaning: CleaningArgs,
        /// Input events file (JSONL).
        #[arg(long)]
        events: PathBuf,
        /// Maximum basis order.
        #[arg(long)]
        n_max: Option<u32>,
        /// Output features CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write the float basis table (binary) here.
        #[arg(long)]
        basis_out: Option<PathBuf>,
    },
    /// Clean events and compute Hillas parameters to CSV.
    Hillas {
        #[command(flatten)]
        camera: CameraArgs,
        #[command(flatten)]
        cleaning: CleaningArgs,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an SVM at fixed (C, gamma) on a labeled features CSV.
    Train {
        /// Input features CSV (labeled rows are used).
        #[arg(long)]
        features: PathBuf,
        #[arg(long, short = 'C')]
        c: f64,
        #[arg(long)]
        gamma: f64,
        /// KKT stopping gap.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// No-progress sweeps tolerated before flagging non-convergence.
        #[arg(long, default_value_t = 50)]
        max_passes: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// Output model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validation grid search over (C, gamma).
    Gridsearch {
        #[arg(long)]
        features: PathBuf,
        /// Output CSV of every evaluated cell (log2C,log2gamma,cv_accuracy).
        #[arg(long)]
        grid_out: PathBuf,
        /// Train on the full input at the best cell and write the model here.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        log2c_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        log2c_max: Option<f64>,
        #[arg(long)]
        log2c_step: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        log2g_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        log2g_max: Option<f64>,
        #[arg(long)]
        log2g_step: Option<f64>,
        #[arg(long)]
        fine_radius: Option<f64>,
        #[arg(long)]
        fine_step: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
        /// Stratified subsample fraction used for the search.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify feature rows with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Output CSV: event_id,label,decision.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on a labeled features CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Optional metrics JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantize a model + basis table into a fixed-point trigger image.
    FxpExport {
        #[command(flatten)]
        camera: CameraArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n_max: Option<u32>,
        /// Base profile: `standard` or `wide`.
        #[arg(long, default_value = "standard")]
        profile: String,
        /// Override the dual-coefficient table format (e.g. q24.8).
        #[arg(long)]
        dual_format: Option<String>,
        /// Override the basis table format (e.g. q2.14).
        #[arg(long)]
        basis_format: Option<String>,
        /// Output trigger image (binary).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run float and fixed-point pipelines head to head over events.
    FxpRun {
        #[command(flatten)]
        camera: CameraArgs,
        #[command(flatten)]
        cleaning: CleaningArgs,
        #[arg(long)]
        trigger: PathBuf,
        /// Float reference model (JSON).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        n_max: Option<u32>,
        /// Output agreement report CSV.
        #[arg(long)]
        out: PathBuf,
        /// Fail (exit 4) unless the agreement gate passes.
        #[arg(long)]
        gate: bool,
        /// Minimum label agreement for --gate.
        #[arg(long, default_value_t = 0.99)]
        agreement_min: f64,
        /// Maximum |float - fixed| deviation for --gate...
        #[arg(long, default_value_t = 0.01)]
        deviation_max: f64,
        /// ...enforced where |float decision| is at most this.
        #[arg(long, default_value_t = 8.0)]
        deviation_window: f64,
    },
    /// Micro-benchmark the float and fixed-point decision pipelines.
    Bench {
        #[command(flatten)]
        camera: CameraArgs,
        /// Events to time.
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long)]
        n_max: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct one cleaned event from its moments and report the error.
    Reconstruct {
        #[command(flatten)]
        camera: CameraArgs,
        #[command(flatten)]
        cleaning: CleaningArgs,
        #[arg(long)]
        events: PathBuf,
        /// Index of the event within the file.
        #[arg(long, default_value_t = 0)]
        event_index: usize,
        #[arg(long)]
        n_max: Option<u32>,
        /// Output CSV: pixel,x,y,cleaned,reconstructed.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Errors carrying their process exit code.
pub enum CliError {
    /// Exit 2: bad arguments or domain preconditions.
    Usage(String),
    /// Exit 3: missing/corrupt data, I/O, format violations.
    Data(String),
    /// Exit 4: the fxp-run acceptance gate failed.
    Gate(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(_)
            | CoreError::EmptyImage
            | CoreError::DimensionMismatch { .. }
            | CoreError::SingleClass => CliError::Usage(e.to_string()),
            CoreError::ExportRange { .. }
            | CoreError::Format { .. }
            | CoreError::Io(_)
            | CoreError::Json(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => {
            if !path.exists() {
                eprintln!("error: config file {} does not exist", path.display());
                return ExitCode::from(3);
            }
            match config::load(path) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(3);
                }
            }
        }
        None => config::FileConfig::default(),
    };

    match commands::run(cli.command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Gate(msg)) => {
            eprintln!("gate failed: {msg}");
            ExitCode::from(4)
        }
    }
}
