//! `relit`: file-in, file-out front end for the relighting engine.
//!
//! Every run prints its resolved configuration as one JSON line on stdout.
//! Failures print one `error[<kind>]: <message>` line on stderr and exit
//! with 2 (usage), 3 (input) or 4 (numeric failure).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relit_core::color::ToneMapMode;
use relit_core::fixtures::FixtureKind;
use relit_core::{ErrorKind, PyramidMode};

#[derive(Debug, Parser)]
#[command(name = "relit", version, about = "Split-sum image-space relighting")]
pub struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available hardware concurrency.
    #[arg(long, global = true, env = "RELIT_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prefilter an environment map into a specular pyramid and irradiance map.
    Prefilter(PrefilterArgs),
    /// Relight bundle frames with optional material edits.
    Relight(RelightArgs),
    /// Relight every frame of an orbit bundle and report timings.
    Orbit(RelightArgs),
    /// Monte Carlo reference renders.
    Oracle(OracleArgs),
    /// View-dependent confidence masks for every frame.
    Mask(MaskArgs),
    /// Fit a homography aligning a rendered image to a target image.
    Homography(HomographyArgs),
    /// PSNR of a test image against a reference.
    Metrics(MetricsArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic G-buffer bundle and environment map.
    GenFixture(GenFixtureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Optimization,
    Relight,
}

impl From<ModeArg> for PyramidMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Optimization => PyramidMode::Optimization,
            ModeArg::Relight => PyramidMode::Relight,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ToneMapArg {
    Agx,
    LinearClamp,
}

impl From<ToneMapArg> for ToneMapMode {
    fn from(t: ToneMapArg) -> Self {
        match t {
            ToneMapArg::Agx => ToneMapMode::Agx,
            ToneMapArg::LinearClamp => ToneMapMode::LinearClamp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureArg {
    Sphere,
    Plane,
    ThreeSpheres,
}

impl From<FixtureArg> for FixtureKind {
    fn from(k: FixtureArg) -> Self {
        match k {
            FixtureArg::Sphere => FixtureKind::Sphere,
            FixtureArg::Plane => FixtureKind::Plane,
            FixtureArg::ThreeSpheres => FixtureKind::ThreeSpheres,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnvArg {
    Sky,
    Constant,
    None,
}

fn parse_rgb(s: &str) -> Result<[f32; 3], String> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    <[f32; 3]>::try_from(parts).map_err(|_| format!("expected r,g,b, got '{s}'"))
}

fn parse_matrix(s: &str) -> Result<[f64; 9], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 9]>::try_from(parts).map_err(|_| format!("expected 9 comma-separated values, got '{s}'"))
}

#[derive(Debug, Args)]
pub struct PrefilterArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, value_enum, default_value = "optimization")]
    pub mode: ModeArg,
    /// Resolution of the unfiltered base level.
    #[arg(long)]
    pub base_res: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RelightArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Defaults to the environment named in the bundle manifest.
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "relight")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame indices to render; all frames when omitted.
    #[arg(long, value_delimiter = ',')]
    pub frames: Vec<usize>,
    #[arg(long)]
    pub roughness_scale: Option<f32>,
    #[arg(long)]
    pub roughness_set: Option<f32>,
    #[arg(long)]
    pub metallic_set: Option<f32>,
    #[arg(long, value_parser = parse_rgb)]
    pub albedo_tint: Option<[f32; 3]>,
    /// Extra environment rotation about world up, in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub env_rotation_deg: f32,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub exposure_ev: f32,
    #[arg(long, value_enum, default_value = "agx")]
    pub tonemap: ToneMapArg,
    /// Width of the display PNGs; native resolution when omitted.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub no_multiscatter: bool,
    /// Color behind uncovered pixels, as linear r,g,b.
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f32; 3]>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub frames: Vec<usize>,
    #[arg(long, default_value_t = 4096)]
    pub spp: u32,
    #[arg(long)]
    pub specular_only: bool,
    #[arg(long)]
    pub diffuse_only: bool,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub smoothstep_lo: Option<f32>,
    #[arg(long)]
    pub smoothstep_hi: Option<f32>,
    #[arg(long)]
    pub gamma: Option<f32>,
    #[arg(long)]
    pub spatial_sigma: Option<f32>,
}

#[derive(Debug, Args)]
pub struct HomographyArgs {
    #[arg(long)]
    pub rendered: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Single-channel validity mask at image resolution.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Initial estimate as 9 row-major values.
    #[arg(long, value_parser = parse_matrix, allow_negative_numbers = true)]
    pub init: Option<[f64; 9]>,
    /// Result JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rendered image warped onto the target.
    #[arg(long)]
    pub warped: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Pixels with mask > 0.5 are compared.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Peak signal; defaults to the largest reference value.
    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
}

#[derive(Debug, Args)]
pub struct GenFixtureArgs {
    #[arg(value_enum)]
    pub kind: FixtureArg,
    #[arg(long, default_value_t = 128)]
    pub res: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub elevation_deg: f32,
    #[arg(long)]
    pub roughness: Option<f32>,
    #[arg(long)]
    pub metallic: Option<f32>,
    #[arg(long, value_parser = parse_rgb)]
    pub albedo: Option<[f32; 3]>,
    #[arg(long)]
    pub orthographic: bool,
    #[arg(long, value_enum, default_value = "sky")]
    pub env: EnvArg,
    #[arg(long, default_value_t = 128)]
    pub env_res: usize,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(relit_core::Error),
}

impl From<relit_core::Error> for CliError {
    fn from(e: relit_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 3,
                ErrorKind::Numeric => 4,
            },
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => ("input", e.to_string()),
                ErrorKind::Numeric => ("numeric", e.to_string()),
            },
        };
        format!("error[{kind}]: {}", msg.replace(['\n', '\r'], " "))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.exit_code());
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.line());
            ExitCode::from(err.exit_code())
        }
    }
}
