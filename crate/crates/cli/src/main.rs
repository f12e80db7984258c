//! `thzrefl`: fit, evaluate and export THz reflection models.

mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thzrefl_core::physics::{FreqUnit, MaterialClass};
use thzrefl_core::wftrend::{InitScoring, RegressionWeighting};

#[derive(Debug, Parser, Serialize)]
#[command(name = "thzrefl", version, about = "THz reflection coefficient modeling")]
pub struct Cli {
    /// Key-value file (`key = value` per line) supplying defaults for any long option.
    #[arg(long, global = true, env = "THZREFL_CONFIG")]
    pub config: Option<PathBuf>,

    /// Directory for output files and the run manifest.
    #[arg(long, global = true, env = "THZREFL_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    /// Seed for every random draw (train/test split, synthetic noise).
    #[arg(long, global = true, env = "THZREFL_SEED", default_value_t = 42)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Split a dataset and fit sub-band trends (optionally also the empirical baseline).
    Fit(FitArgs),
    /// Evaluate the model at one point or over a grid.
    Predict(PredictArgs),
    /// Score fitted trends on a test set.
    Eval(EvalArgs),
    /// Generate a synthetic dataset from a built-in material.
    Synth(SynthArgs),
    /// Write a frequency x angle lookup table for ray tracers.
    Export(ExportArgs),
    /// List the built-in material table.
    Materials(MaterialsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassArg {
    Metal,
    NonMetal,
}

impl From<ClassArg> for MaterialClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Metal => MaterialClass::Metal,
            ClassArg::NonMetal => MaterialClass::NonMetal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitArg {
    Ghz,
    Thz,
}

impl From<UnitArg> for FreqUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Ghz => FreqUnit::Ghz,
            UnitArg::Thz => FreqUnit::Thz,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringArg {
    CurrentBand,
    OwnBand,
}

impl From<ScoringArg> for InitScoring {
    fn from(s: ScoringArg) -> Self {
        match s {
            ScoringArg::CurrentBand => InitScoring::CurrentBand,
            ScoringArg::OwnBand => InitScoring::OwnBand,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingArg {
    Unweighted,
    InverseRmse,
}

impl From<WeightingArg> for RegressionWeighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Unweighted => RegressionWeighting::Unweighted,
            WeightingArg::InverseRmse => RegressionWeighting::InverseRmse,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Reflection samples (`freq_ghz,angle_deg,gamma`).
    #[arg(
        long,
        env = "THZREFL_INPUT",
        required_unless_present = "sweeps",
        conflicts_with = "sweeps"
    )]
    pub input: Option<PathBuf>,
    /// Raw material sweeps (`freq_ghz,angle_deg,s21_mag`), ratioed against --reference.
    #[arg(long, env = "THZREFL_SWEEPS", requires = "reference")]
    pub sweeps: Option<PathBuf>,
    /// Metal reference sweeps on the same grid as --sweeps.
    #[arg(long, env = "THZREFL_REFERENCE")]
    pub reference: Option<PathBuf>,
    /// Reference magnitudes below this are dropped.
    #[arg(long, env = "THZREFL_NOISE_FLOOR", default_value_t = thzrefl_core::data::DEFAULT_NOISE_FLOOR)]
    pub noise_floor: f64,
    #[arg(long, env = "THZREFL_MATERIAL_CLASS")]
    pub material_class: ClassArg,
    #[arg(long, env = "THZREFL_THICKNESS_M")]
    pub thickness_m: f64,
    /// Sub-band width in GHz.
    #[arg(long, env = "THZREFL_DELTA_F", default_value_t = 10.0)]
    pub delta_f: f64,
    /// Number of previous bands blended into each start point.
    #[arg(long, env = "THZREFL_WINDOW", default_value_t = 3)]
    pub window: usize,
    #[arg(long, env = "THZREFL_TRAIN_FRAC", default_value_t = 0.6)]
    pub train_frac: f64,
    /// Frequency axis of the trend lines and dispersion terms.
    #[arg(long, env = "THZREFL_UNIT", value_enum, default_value_t = UnitArg::Thz)]
    pub unit: UnitArg,
    #[arg(long, env = "THZREFL_INIT_SCORING", value_enum, default_value_t = ScoringArg::CurrentBand)]
    pub init_scoring: ScoringArg,
    #[arg(long, env = "THZREFL_WEIGHTING", value_enum, default_value_t = WeightingArg::Unweighted)]
    pub weighting: WeightingArg,
    /// Also fit the empirical-permittivity slab model on the same split.
    #[arg(long, env = "THZREFL_BASELINE")]
    pub baseline: bool,
    /// Dataset name recorded in outputs.
    #[arg(long, env = "THZREFL_NAME", default_value = "dataset")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelSource {
    /// Built-in material name.
    #[arg(
        long,
        env = "THZREFL_MATERIAL",
        required_unless_present = "params",
        conflicts_with = "params"
    )]
    pub material: Option<String>,
    /// Trend file written by `fit`.
    #[arg(long, env = "THZREFL_PARAMS")]
    pub params: Option<PathBuf>,
    /// Slab thickness; defaults to the material's nominal value or the trend file's.
    #[arg(long, env = "THZREFL_THICKNESS_M")]
    pub thickness_m: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[arg(long, requires = "angle_deg", conflicts_with_all = ["freqs", "angles"])]
    pub freq_ghz: Option<f64>,
    #[arg(long, requires = "freq_ghz")]
    pub angle_deg: Option<f64>,
    /// Frequency grid `start:step:end` in GHz.
    #[arg(long, env = "THZREFL_FREQS")]
    pub freqs: Option<String>,
    /// Angle grid `start:step:end` in degrees.
    #[arg(long, env = "THZREFL_ANGLES")]
    pub angles: Option<String>,
    /// Write grid predictions here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Test samples (`freq_ghz,angle_deg,gamma`).
    #[arg(long, env = "THZREFL_TEST")]
    pub test: PathBuf,
    /// Trend files to score, in report order.
    #[arg(long = "params", env = "THZREFL_PARAMS", required = true, num_args = 1.., value_delimiter = ',')]
    pub params: Vec<PathBuf>,
    /// Overrides the thickness stored in the trend files.
    #[arg(long, env = "THZREFL_THICKNESS_M")]
    pub thickness_m: Option<f64>,
    #[arg(long, env = "THZREFL_LEVEL", default_value_t = 0.9)]
    pub level: f64,
}

pub const DEFAULT_FREQS: &str = "300:0.08333333333333333:400";
pub const DEFAULT_ANGLES: &str = "10:10:80";

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, env = "THZREFL_MATERIAL")]
    pub material: String,
    #[arg(long, env = "THZREFL_THICKNESS_M")]
    pub thickness_m: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, env = "THZREFL_NOISE", default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, env = "THZREFL_FREQS", default_value = DEFAULT_FREQS)]
    pub freqs: String,
    #[arg(long, env = "THZREFL_ANGLES", default_value = DEFAULT_ANGLES)]
    pub angles: String,
    /// Defaults to `<out-dir>/synth.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    RtTable,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[arg(long, value_enum, default_value_t = ExportFormat::RtTable)]
    pub format: ExportFormat,
    #[arg(long, env = "THZREFL_FREQS", default_value = DEFAULT_FREQS)]
    pub freqs: String,
    #[arg(long, env = "THZREFL_ANGLES", default_value = DEFAULT_ANGLES)]
    pub angles: String,
    /// Defaults to `<out-dir>/rt_table.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ListFormat {
    Text,
    Toml,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct MaterialsArgs {
    #[arg(long, value_enum, default_value_t = ListFormat::Text)]
    pub format: ListFormat,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Ingestion(anyhow::Error),
    Fit(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Ingestion(_) => 3,
            Failure::Fit(_) => 4,
            Failure::Internal(_) => 5,
        }
    }
}

impl From<thzrefl_core::Error> for Failure {
    fn from(e: thzrefl_core::Error) -> Self {
        use thzrefl_core::Error as E;
        match e {
            E::Domain(msg) => Failure::Usage(msg),
            e if e.is_ingestion() => Failure::Ingestion(e.into()),
            e @ E::UnderDetermined { .. } => Failure::Ingestion(e.into()),
            e @ (E::InsufficientBands { .. }
            | E::Singular
            | E::NonPhysical(_)
            | E::Overflow { .. }
            | E::Evaluation(_)) => Failure::Fit(e.into()),
            e => Failure::Internal(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.into())
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::merge_config(&command(), argv) {
        Ok(a) => a,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(other) => return report(other),
    };
    let matches = match command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            // clap exits 0 for --help/--version and 2 for usage errors
            e.exit();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

/// The clap command with repeated options resolved last-one-wins, which is
/// how config-file values yield to explicit flags.
pub fn command() -> clap::Command {
    Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true))
}

fn report(f: Failure) -> ExitCode {
    let code = f.code();
    match &f {
        Failure::Usage(msg) => eprintln!("error: {msg}"),
        Failure::Ingestion(e) => eprintln!("input error: {e:#}"),
        Failure::Fit(e) => eprintln!("fit failed: {e:#}"),
        Failure::Internal(e) => eprintln!("internal error: {e:#}"),
    }
    ExitCode::from(code)
}
