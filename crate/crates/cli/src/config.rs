//! TOML run configuration. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use phasenewton::kaczmarz::KaczmarzConfig;
use phasenewton::phantom::{Lattice, NoiseKind, NoiseModel, PhantomSpec2D};
use phasenewton::solver::{Sign, SolverConfig};
use phasenewton::{ImagingGeometry, Padding};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` replaces it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` replaces it.
    pub out: Option<PathBuf>,
    pub geometry: Option<ImagingGeometry>,
    pub phantom2d: Option<PhantomSpec2D>,
    pub packing: Option<PackingSection>,
    pub angles: Option<AnglesSection>,
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub constraints: ConstraintSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub kaczmarz: KaczmarzConfig,
    #[serde(default)]
    pub schedule: ScheduleSection,
    pub reconstruct: Option<ReconstructSection>,
    pub fsc: Option<FscSection>,
    pub localize: Option<LocalizeSection>,
    pub export: Option<ExportSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSection {
    None,
    Gaussian { sigma: f64 },
    Poisson { peak_flux: f64 },
}

impl NoiseSection {
    pub fn model(self, seed: u64) -> Option<NoiseModel> {
        let kind = match self {
            NoiseSection::None => return None,
            NoiseSection::Gaussian { sigma } => NoiseKind::Gaussian { sigma },
            NoiseSection::Poisson { peak_flux } => NoiseKind::Poisson { peak_flux },
        };
        Some(NoiseModel { kind, seed })
    }
}

/// Sphere packing phantom. Centers come from `centers`, a `lattice`, or
/// random sequential placement of `count` spheres inside `region`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingSection {
    pub shape: [usize; 3],
    pub radius: f64,
    pub delta: f64,
    #[serde(default)]
    pub beta: f64,
    pub centers: Option<Vec<[f64; 3]>>,
    pub lattice: Option<LatticeSection>,
    pub count: Option<usize>,
    /// Minimum surface gap between randomly placed spheres, in voxels.
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Box for random placement, centered in the volume; defaults to the volume.
    pub region: Option<[usize; 3]>,
    /// Gaussian displacement of every center, in voxels.
    #[serde(default)]
    pub jitter: f64,
}

fn default_gap() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub kind: Lattice,
    pub counts: [usize; 3],
    pub origin: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesSection {
    pub count: usize,
    /// Angular range, sampled as `k * range / count`.
    #[serde(default = "default_range")]
    pub range_deg: f64,
}

fn default_range() -> f64 {
    180.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// Circular (2D) or cylindrical (3D, about the rotation axis) support.
    pub support_radius: Option<f64>,
    /// Container whose nonzero entries form the support.
    pub support_mask: Option<PathBuf>,
    pub homogeneous_ratio: Option<f64>,
    #[serde(default)]
    pub real_valued: bool,
    pub sign: Option<Sign>,
    pub penalty_weight: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub wedge: usize,
    pub passes: usize,
    #[serde(default = "default_true")]
    pub random_order: bool,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { wedge: 6, passes: 2, random_order: true }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    pub input: PathBuf,
    #[serde(default)]
    pub padding: Padding,
    /// Sobolev order of the object-space norm; 0 is plain L2.
    #[serde(default)]
    pub sobolev: f64,
    /// Use the noise norm of the input metadata for discrepancy stopping.
    #[serde(default)]
    pub discrepancy: bool,
    /// Explicit noise norm; takes precedence over the metadata.
    pub noise_norm: Option<f64>,
    /// Also run the direct homogeneous CTF inversion.
    #[serde(default)]
    pub ctf: bool,
    #[serde(default = "default_ctf_reg")]
    pub ctf_reg: f64,
    /// Tomography: reconstruct even and odd frames separately as well.
    #[serde(default)]
    pub split_half: bool,
}

fn default_ctf_reg() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FscSection {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default = "default_shells")]
    pub shells: usize,
    pub voxel_size_nm: Option<f64>,
}

fn default_shells() -> usize {
    32
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSection {
    pub input: PathBuf,
    pub diameter: f64,
    /// Gaussian smoothing of the deconvolution, in voxels.
    #[serde(default = "default_fwhm")]
    pub fwhm: f64,
    #[serde(default = "default_reg")]
    pub reg: f64,
    /// Skip the form-factor deconvolution.
    #[serde(default)]
    pub raw: bool,
    /// Defaults to the sphere radius.
    pub min_separation: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub voxel_size_nm: Option<f64>,
}

fn default_fwhm() -> f64 {
    2.0
}

fn default_reg() -> f64 {
    1e-3
}

fn default_threshold() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Normalization {
    MinMax,
    Percentile { low: f64, high: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSection {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Index along the first axis of a volume.
    pub slice: Option<usize>,
    #[serde(default = "default_norm")]
    pub normalization: Normalization,
    #[serde(default = "default_bits")]
    pub bits: u8,
}

fn default_norm() -> Normalization {
    Normalization::MinMax
}

fn default_bits() -> u8 {
    8
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Section that a command cannot run without.
pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
}
