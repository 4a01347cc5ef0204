//! `ncf` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error (missing or
//! malformed input, I/O), 3 numerical failure (no pose found, non-finite loss).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<ncf_core::Error> for CliError {
    fn from(e: ncf_core::Error) -> Self {
        use ncf_core::Error as E;
        let msg = e.to_string();
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else if matches!(e, E::Config(_) | E::InvalidCamera(_)) {
            CliError::Usage(msg)
        } else {
            CliError::Data(msg)
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ncf", version, about = "Object pose estimation with neural correspondence fields", after_long_help = config::config_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; see `ncf --help` for every key and its default.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `mesh`.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a built-in test object as PLY.
    Mesh {
        /// l-prism | box | cylinder | sphere
        #[arg(long, default_value = "l-prism")]
        shape: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic dataset and its manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        /// `none`, or `MIN-MAX` target visibility (e.g. `0.4-0.6`).
        #[arg(long)]
        occlusion: Option<String>,
    },
    /// Train a field on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Weight file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// JSON-lines training log (default: weights path with `.log.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Estimate poses for one image or for every record of a manifest.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Use the analytic field of the object at this pose (JSON) instead of weights.
        #[arg(long, conflicts_with = "weights")]
        oracle_pose: Option<PathBuf>,
        /// With a manifest: use each record's ground-truth pose as the analytic field.
        #[arg(long, conflicts_with_all = ["weights", "oracle_pose"])]
        oracle: bool,
        #[arg(long, conflicts_with = "manifest")]
        image: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Pose JSON (single image) or output directory (manifest).
        #[arg(long)]
        out: PathBuf,
        /// Correspondence dump path (single image); with a manifest, any value
        /// enables one `.corr` file per record next to its pose.
        #[arg(long)]
        dump_corr: Option<PathBuf>,
        /// Overrides `sampling.grid_step`.
        #[arg(long)]
        grid_step: Option<f64>,
        /// Worker threads (default: all cores); results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score estimates against a manifest's ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory with `<image stem>.json` poses (and optional `.corr` dumps).
        #[arg(long)]
        estimates: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Per-visibility-bin inlier fractions as CSV (needs `.corr` dumps).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Extract the predicted surface of one image with Marching Cubes.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, conflicts_with = "weights")]
        oracle_pose: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lattice step (mm); defaults to `sampling.grid_step`.
        #[arg(long)]
        step: Option<f64>,
    },
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
