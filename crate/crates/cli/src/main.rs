//! `phasenewton`: simulate, reconstruct and analyze near-field phase-contrast data.

mod commands;
mod config;
mod error;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

/// Environment variable selecting the worker thread count.
const THREADS_VAR: &str = "PHASENEWTON_THREADS";

#[derive(Parser)]
#[command(name = "phasenewton", version, about = "Regularized Newton phase retrieval and tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` of the configuration. Relative paths resolve against the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a phantom and write (noisy) holograms.
    Simulate(Common),
    /// Reconstruct phase and absorption from one hologram.
    Reconstruct2d {
        #[command(flatten)]
        common: Common,
        /// Also run the direct homogeneous CTF inversion.
        #[arg(long)]
        ctf: bool,
    },
    /// Newton-Kaczmarz reconstruction from a hologram stack.
    ReconstructTomo {
        #[command(flatten)]
        common: Common,
        /// Also reconstruct even and odd frames separately.
        #[arg(long)]
        split_half: bool,
    },
    /// Resolution and particle analysis of volumes.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Write a container (or a volume slice) as a grayscale PNG.
    ExportImage(Common),
}

#[derive(Subcommand)]
enum Analysis {
    /// Fourier shell correlation of two volumes.
    Fsc(Common),
    /// Sphere localization by form-factor deconvolution.
    Localize(Common),
}

fn set_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

/// Loaded configuration with command-line overrides applied.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Run {
    fn load(c: &Common) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        let out = c.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { cfg, out })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    set_threads()?;
    match cli.command {
        Command::Simulate(c) => commands::simulate(&Run::load(&c)?),
        Command::Reconstruct2d { common, ctf } => commands::reconstruct2d(&Run::load(&common)?, ctf),
        Command::ReconstructTomo { common, split_half } => {
            commands::reconstruct_tomo(&Run::load(&common)?, split_half)
        }
        Command::Analyze { what: Analysis::Fsc(c) } => commands::analyze_fsc(&Run::load(&c)?),
        Command::Analyze { what: Analysis::Localize(c) } => commands::analyze_localize(&Run::load(&c)?),
        Command::ExportImage(c) => export::export_image(&Run::load(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
