//! `moire`: dataset synthesis, registration, training, inference and
//! evaluation for the multiresolution moire removal network.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moire_core::error::ErrorClass;
use moire_core::net::Variant;

#[derive(Parser, Debug)]
#[command(name = "moire", version, about = "Moire pattern removal toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Training configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 gives fully sequential, reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Network variant.
    #[arg(long, global = true, default_value = "default", value_parser = parse_variant)]
    variant: Variant,
    /// Single-channel network.
    #[arg(long, global = true)]
    grayscale: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::ALL
        .iter()
        .copied()
        .find(|v| v.name() == s)
        .ok_or_else(|| format!("unknown variant `{s}` (expected one of {})", Variant::ALL.map(|v| v.name()).join(", ")))
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic contaminated/reference pairs.
    SynthDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Directory of reference images; procedural scenes when omitted.
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Register photographed frames against their references.
    Align {
        /// Manifest of `photo<TAB>reference` lines.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Binarisation threshold; Otsu when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = moire_core::align::ETA)]
        eta: f64,
    },
    /// Report PSNR and accept/reject for every pair of a manifest.
    Verify {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = moire_core::align::ETA)]
        eta: f64,
    },
    /// Train a network on the train/val splits of a pair manifest.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore one image.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a pair manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Split to evaluate (`train`, `val`, `test` or `all`).
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Write each branch's output map for one image.
    InspectBranches {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        amplification: f64,
    },
    /// Print the number of trainable parameters.
    ParamCount,
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<moire_core::Error> for Failure {
    fn from(e: moire_core::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
