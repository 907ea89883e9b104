//! Array container: a raw little-endian, row-major payload (`name.bin`)
//! next to a JSON sidecar (`name.json`) describing it.
//!
//! Complex values are stored as interleaved `(re, im)` pairs, so `c64`
//! takes 8 bytes per element and `c128` 16.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::StepRecord;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    C64,
    C128,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 | Dtype::C64 => 8,
            Dtype::C128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub format_version: u32,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    #[serde(default)]
    pub axis_labels: Vec<String>,
    /// Pixel or voxel size in nm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fresnel_number: Option<f64>,
    /// One angle per frame of a stack, in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles_deg: Option<Vec<f64>>,
    /// Realized noise norm of simulated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(shape: &[usize], dtype: Dtype) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            shape: shape.to_vec(),
            dtype,
            axis_labels: Vec::new(),
            pixel_size_nm: None,
            fresnel_number: None,
            angles_deg: None,
            noise_norm: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn n_elements(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
    C64(ArrayD<Complex32>),
    C128(ArrayD<Complex64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::C64(_) => Dtype::C64,
            ArrayData::C128(_) => Dtype::C128,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            ArrayData::F32(a) => a.shape(),
            ArrayData::F64(a) => a.shape(),
            ArrayData::C64(a) => a.shape(),
            ArrayData::C128(a) => a.shape(),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.shape().iter().product::<usize>() * self.dtype().size());
        match self {
            ArrayData::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::C64(a) => a.iter().for_each(|v| {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }),
            ArrayData::C128(a) => a.iter().for_each(|v| {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }),
        }
        out
    }

    fn from_bytes(bytes: &[u8], shape: &[usize], dtype: Dtype) -> Result<Self> {
        let n: usize = shape.iter().product();
        if bytes.len() != n * dtype.size() {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {} for shape {shape:?} and dtype {dtype:?}",
                bytes.len(),
                n * dtype.size()
            )));
        }
        let f32s = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
        let f64s = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        let sh = IxDyn(shape);
        let bad = |e: ndarray::ShapeError| Error::Format(e.to_string());
        Ok(match dtype {
            Dtype::F32 => ArrayData::F32(ArrayD::from_shape_vec(sh, bytes.chunks_exact(4).map(f32s).collect()).map_err(bad)?),
            Dtype::F64 => ArrayData::F64(ArrayD::from_shape_vec(sh, bytes.chunks_exact(8).map(f64s).collect()).map_err(bad)?),
            Dtype::C64 => ArrayData::C64(
                ArrayD::from_shape_vec(
                    sh,
                    bytes.chunks_exact(8).map(|c| Complex32::new(f32s(&c[..4]), f32s(&c[4..]))).collect(),
                )
                .map_err(bad)?,
            ),
            Dtype::C128 => ArrayData::C128(
                ArrayD::from_shape_vec(
                    sh,
                    bytes.chunks_exact(16).map(|c| Complex64::new(f64s(&c[..8]), f64s(&c[8..]))).collect(),
                )
                .map_err(bad)?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayContainer {
    pub meta: Metadata,
    pub data: ArrayData,
}

/// Sidecar path belonging to a payload path.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl ArrayContainer {
    pub fn new(data: ArrayData) -> Self {
        let meta = Metadata::new(data.shape(), data.dtype());
        Self { meta, data }
    }

    pub fn from_f64(a: ArrayD<f64>) -> Self {
        Self::new(ArrayData::F64(a))
    }

    pub fn from_c128(a: ArrayD<Complex64>) -> Self {
        Self::new(ArrayData::C128(a))
    }

    fn check(&self) -> Result<()> {
        if self.meta.shape != self.data.shape() || self.meta.dtype != self.data.dtype() {
            return Err(Error::Format("metadata does not describe the payload".into()));
        }
        if !self.meta.axis_labels.is_empty() && self.meta.axis_labels.len() != self.meta.shape.len() {
            return Err(Error::Format("one axis label per dimension required".into()));
        }
        if let Some(a) = &self.meta.angles_deg {
            if self.meta.shape.first() != Some(&a.len()) {
                return Err(Error::Format("angle count must match the first axis".into()));
            }
        }
        Ok(())
    }

    /// Writes the payload to `path` and the sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.check()?;
        let json = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(path, &self.data.to_bytes())?;
        write_atomic(&sidecar_path(path), format!("{json}\n").as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side)
            .map_err(|e| Error::Format(format!("cannot read sidecar {}: {e}", side.display())))?;
        let meta: Metadata =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {}", meta.format_version)));
        }
        let bytes = fs::read(path)?;
        let data = ArrayData::from_bytes(&bytes, &meta.shape, meta.dtype)?;
        let c = Self { meta, data };
        c.check()?;
        Ok(c)
    }

    /// Real payload widened to `f64`.
    pub fn to_f64(&self) -> Result<ArrayD<f64>> {
        match &self.data {
            ArrayData::F32(a) => Ok(a.mapv(f64::from)),
            ArrayData::F64(a) => Ok(a.clone()),
            _ => Err(Error::Format("expected a real-valued container".into())),
        }
    }

    /// Payload widened to `Complex64`; real data gets zero imaginary part.
    pub fn to_c128(&self) -> ArrayD<Complex64> {
        match &self.data {
            ArrayData::F32(a) => a.mapv(|v| Complex64::new(v.into(), 0.0)),
            ArrayData::F64(a) => a.mapv(|v| Complex64::new(v, 0.0)),
            ArrayData::C64(a) => a.mapv(|z| Complex64::new(z.re.into(), z.im.into())),
            ArrayData::C128(a) => a.clone(),
        }
    }
}

/// Appends one JSON line per record.
pub fn append_history(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<StepRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(e.to_string())))
        .collect()
}
