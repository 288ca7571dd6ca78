//! `contour-refine`: synthesize sketch datasets, reconstruct and edit
//! shapes from line drawings, and score predictions.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contour_refine::Error;

pub const THREADS_ENV: &str = "CONTOUR_REFINE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "contour-refine", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a dataset of sketches in both styles from sampled or given codes.
    Synth(SynthArgs),
    /// Reconstruct a shape from a sketch and its camera.
    Reconstruct(ReconstructArgs),
    /// Apply a single editing stroke to an existing code.
    Edit(EditArgs),
    /// Score predicted meshes against a dataset's ground truth.
    Eval(EvalArgs),
    /// Write the built-in template to a directory.
    Template(TemplateArgs),
}

#[derive(Args, Debug)]
struct TemplateSource {
    /// Template directory (`mesh.obj` + `basis.bin`); the built-in template when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    template: TemplateSource,
    /// Number of shapes drawn from the template's prior.
    #[arg(long, default_value_t = 4, conflicts_with = "codes")]
    shapes: usize,
    /// Explicit code files instead of sampled shapes.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    codes: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    views: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sketch width and height in pixels.
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ObjectiveKind {
    Chamfer,
    Silhouette,
}

#[derive(Args, Debug)]
struct StepArgs {
    /// Refinement steps; 0 keeps the starting code.
    #[arg(long, default_value_t = 400)]
    steps: usize,
    /// Adam learning rate in per-mode spreads.
    #[arg(long, default_value_t = 5e-3)]
    step_size: f64,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[command(flatten)]
    template: TemplateSource,
    #[arg(long)]
    sketch: PathBuf,
    /// Camera JSON: azimuth_deg, elevation_deg, distance, focal_px, width, height.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveKind::Chamfer)]
    objective: ObjectiveKind,
    #[command(flatten)]
    steps: StepArgs,
    /// Candidates scored by the multi-start initialization.
    #[arg(long, default_value_t = 64)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `mesh.obj`, `code.bin` and `trace.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EditArgs {
    #[command(flatten)]
    template: TemplateSource,
    /// Code before the edit.
    #[arg(long)]
    code: PathBuf,
    #[arg(long)]
    stroke: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    /// Locality radius in pixels.
    #[arg(long, default_value_t = 12.0)]
    t: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_mask: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_normal: f64,
    #[command(flatten)]
    steps: StepArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    template: TemplateSource,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<sample>.obj` per manifest record, e.g. `00012.obj`.
    #[arg(long)]
    predictions: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Surface samples per mesh for the Chamfer distance.
    #[arg(long, default_value_t = contour_refine::metrics::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normal-map resolution; each sample's own camera size when omitted.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args, Debug)]
struct TemplateArgs {
    #[arg(long, default_value_t = 32)]
    k: usize,
    #[arg(long, default_value_t = 6)]
    segments: usize,
    #[arg(long, default_value_t = 96)]
    library: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

fn is_numerical(e: &Error) -> bool {
    match e {
        Error::AtStep { source, .. } => is_numerical(source),
        Error::NonFinite(_)
        | Error::BehindCamera { .. }
        | Error::MaskTouchesBorder { .. }
        | Error::UncoveredContourPixel { .. }
        | Error::NoContourNearStroke { .. }
        | Error::ZeroArea
        | Error::NoJointCoverage => true,
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_numerical(&e) {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Input(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Input(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Edit(a) => commands::edit(a),
        Command::Eval(a) => commands::eval(a),
        Command::Template(a) => commands::template(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
