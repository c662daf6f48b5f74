//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "synthmatch",
    about = "Fit, edit, analyze, and generate synthesizer patches that match target sounds",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit synthesizer parameters to a target WAV with one optimizer.
    Fit(FitArgs),
    /// Render a patch file to a 2 s, 44.1 kHz WAV.
    Render(RenderArgs),
    /// Apply edit operations to a patch file.
    Edit(EditArgs),
    /// Run optimizers against a set of targets and tabulate losses.
    Benchmark(BenchmarkArgs),
    /// Extract f0/duration features from a directory of patches.
    Analyze(AnalyzeArgs),
    /// Fit a Gaussian to patches and sample new sounds from it.
    Generate(GenerateArgs),
    /// Export the 78-entry parameter descriptor table as JSON.
    Params(ParamsArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Target sound (WAV; resampled and length-fixed automatically).
    #[arg(long)]
    pub input: PathBuf,
    /// Optimizer name (see `benchmark --help` for the list).
    #[arg(long)]
    pub method: String,
    /// Random seed for the optimizer.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output patch JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-iteration trace CSV path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Optional method config JSON (as produced in the manifest).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cap the evaluation budget, resizing the method's iteration counts.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Scale the method's primary iteration count (e.g. 0.1 for smoke runs).
    #[arg(long)]
    pub budget_scale: Option<f64>,
    /// Peak-normalize the target before fitting.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,
    /// Class label stored in the output patch.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Input patch JSON.
    #[arg(long)]
    pub patch: PathBuf,
    /// Output WAV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for the render noise generator.
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// WAV sample encoding.
    #[arg(long, value_enum, default_value_t = WavEncoding::Pcm16)]
    pub format: WavEncoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Input patch JSON.
    #[arg(long)]
    pub patch: PathBuf,
    /// Output patch JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Shift the fundamental by this many semitones (repeatable).
    #[arg(long, allow_hyphen_values = true)]
    pub pitch_shift: Vec<f64>,
    /// Zero the noise mixer level (repeatable; idempotent).
    #[arg(long, action = clap::ArgAction::Count)]
    pub denoise: u8,
    /// Scale an envelope field: `adsr:field:factor`, e.g.
    /// `adsr_1:attack:0.5` (repeatable).
    #[arg(long)]
    pub scale_env: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Directory of target WAV files.
    #[arg(long, conflicts_with = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Render this many synthetic targets from random patches instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Comma-separated method list, or `all`.
    #[arg(long, default_value = "all")]
    pub methods: String,
    /// Base random seed (targets and optimizer runs derive from it).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap each method's evaluation budget.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Output results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Peak-normalize dataset targets before fitting.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory containing patch JSON files.
    #[arg(long)]
    pub patches: PathBuf,
    /// Output features CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory containing fitted patch JSON files (>= 2).
    #[arg(long)]
    pub patches: PathBuf,
    /// Number of new patches to sample.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Which parameters the Gaussian covers.
    #[arg(long, value_enum, default_value_t = DimsChoice::All)]
    pub dims: DimsChoice,
    /// Fit a full covariance instead of a diagonal one.
    #[arg(long, default_value_t = false)]
    pub full_covariance: bool,
    /// Output directory for sampled patches, WAVs, and the model.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DimsChoice {
    /// All 78 parameters.
    All,
    /// Only keyboard.midi_f0 and keyboard.duration; other coordinates are
    /// copied from the fitted patches.
    F0dur,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Output JSON path; prints to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
