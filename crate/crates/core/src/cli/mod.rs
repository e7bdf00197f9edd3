//! `stormkit` command line.
//!
//! Exit status: 0 on success, 2 on usage errors, 1 on data or validation
//! errors. Commands that write files also write a run manifest
//! (`<output>.run.json`, or `run.json` inside an output directory) holding
//! argv, seed, the effective configuration and its SHA-256, and the tool
//! version.

mod commands;
mod degrade;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::config_hash;
use crate::degrade::{Category, Severity};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "STORMKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stormkit", version, about = "Weather degradation, sampling plans, recalibration checks, fusion metrics and checkpoint soup")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Degrade every PNG under a directory
    Degrade(DegradeArgs),
    /// Build a scene-balanced sampling plan
    Plan(PlanArgs),
    /// Average the probability maps of one scene
    Fuse(FuseArgs),
    /// Fuse per scene and score against labels
    Eval(EvalArgs),
    /// Average checkpoints, or check that they can be averaged
    Soup(SoupArgs),
    /// Recalibration adapter utilities
    #[command(subcommand)]
    Recalib(RecalibCommand),
    /// Empirical degradation category frequencies
    Augstats(AugstatsArgs),
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "P")]
    pub apply_prob: Option<f64>,
    #[arg(long)]
    pub category: Option<CategoryArg>,
    #[arg(long)]
    pub severity: Option<SeverityArg>,
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "N")]
    pub iters: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory of `.pmap` files, one per frame
    #[arg(long, value_name = "DIR")]
    pub scene: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Holds `<scene_id>/<frame_id>.pmap`
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true)]
pub struct SoupArgs {
    #[command(subcommand)]
    pub check: Option<SoupCommand>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SoupCommand {
    /// Print the compatibility report; nonzero exit on mismatch
    Check {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecalibCommand {
    /// Finite-difference gradient check on random instances
    Check(RecalibCheckArgs),
    /// Parameter count for adapters at the given widths
    Params {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
    },
}

#[derive(Debug, Args)]
pub struct RecalibCheckArgs {
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Spatial size of each square instance
    #[arg(long, default_value_t = 5)]
    pub size: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GateArg::Bottleneck)]
    pub gate: GateArg,
}

#[derive(Debug, Args)]
pub struct AugstatsArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "P")]
    pub apply_prob: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CategoryArg {
    Blur,
    Dark,
    Snow,
    Haze,
    Glare,
}

impl From<CategoryArg> for Category {
    fn from(c: CategoryArg) -> Self {
        match c {
            CategoryArg::Blur => Category::Blur,
            CategoryArg::Dark => Category::Dark,
            CategoryArg::Snow => Category::Snow,
            CategoryArg::Haze => Category::Haze,
            CategoryArg::Glare => Category::Glare,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SeverityArg {
    Light,
    Medium,
    Heavy,
}

impl From<SeverityArg> for Severity {
    fn from(s: SeverityArg) -> Self {
        match s {
            SeverityArg::Light => Severity::Light,
            SeverityArg::Medium => Severity::Medium,
            SeverityArg::Heavy => Severity::Heavy,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GateArg {
    Bottleneck,
    Input,
}

/// Misuse detected after argument parsing; reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("\nFor more information, try '--help'.");
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: Cli, argv: &[String]) -> anyhow::Result<i32> {
    match cli.command {
        Command::Degrade(a) => degrade::run(a, argv),
        Command::Plan(a) => commands::plan(a, argv),
        Command::Fuse(a) => commands::fuse(a, argv),
        Command::Eval(a) => commands::eval(a, argv),
        Command::Soup(a) => commands::soup_archives(a, argv),
        Command::Recalib(c) => commands::recalib(c),
        Command::Augstats(a) => commands::augstats(a),
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub argv: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub config_hash: String,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'static str, argv: &'a [String], seed: Option<u64>, config: Vec<(String, String)>) -> Self {
        let config_hash = config_hash(&config);
        Self {
            tool: "stormkit",
            version: VERSION,
            command,
            argv,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: config
                .into_iter()
                .map(|(k, v)| (k, serde_json::Value::String(v)))
                .collect(),
            config_hash,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|e| anyhow::anyhow!("writing run manifest {}: {e}", path.display()))
    }
}

/// `<file>.run.json` next to a file output.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(OsString::from).unwrap_or_default();
    name.push(".run.json");
    output.with_file_name(name)
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
