//! `edfa-twin`: synthesize, ingest, train, transfer and evaluate EDFA gain
//! models from the command line.
//!
//! Structured summaries go to stdout. Failures print one JSON object
//! `{"error": <code>, "message": <text>}` to stderr and exit with status 1.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "edfa-twin", version, about = "EDFA gain-spectrum models with few-shot transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Homo,
    Hetero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the file's seed and `EDFA_TWIN_SEED`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a measurement campaign for one synthetic amplifier.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "booster")]
        kind: String,
        /// Comma-separated gain settings in dB; the device defaults otherwise.
        #[arg(long, value_delimiter = ',')]
        gains: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FileFormat,
        /// Also write the raw auxiliary-OCM capture (ILA only).
        #[arg(long)]
        ila_raw: bool,
    },
    /// Validate a record file and rewrite it; rejected rows are reported.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FileFormat,
        /// Input is a raw ILA capture to renormalize against the PM totals.
        #[arg(long)]
        ila_normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain and fine-tune a direct model on a device's train split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        skip_pretrain: bool,
        /// Do not store a CORAL reference covariance in the checkpoint.
        #[arg(long)]
        no_coral_reference: bool,
    },
    /// Adapt a source checkpoint to a target device from a few shots.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target_data: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Shots per gain setting.
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Heterogeneous mode without the CORAL term.
        #[arg(long)]
        no_coral: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a device's test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        cdf: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Direct models on the diagonal, transfers off it.
    Matrix {
        #[command(flatten)]
        common: Common,
        /// Comma-separated device data directories.
        #[arg(long, value_delimiter = ',', required = true)]
        devices: Vec<PathBuf>,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Target MAE against the number of transfer shots.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target_data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,48")]
        shots: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "hetero")]
        mode: Mode,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(code: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": code, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string().trim_end().to_string()),
    };
    match commands::run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.code(), e.to_string()),
    }
}
