//! Grayscale PNG export with documented normalization.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use ndarray::{Array2, Axis, Ix2};
use phasenewton::io::write_atomic;
use serde_json::json;

use crate::commands::read_container;
use crate::config::{require, Normalization};
use crate::error::CliError;
use crate::Run;

/// Intensity window `[lo, hi]` and how many pixels fall outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub below: usize,
    pub above: usize,
}

/// Percentile window by order statistics: `lo` is the `floor(p_lo n)`-th and
/// `hi` the `(ceil(p_hi n) - 1)`-th smallest value.
pub fn window(values: &[f64], norm: Normalization) -> Result<Window, CliError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (lo, hi) = match norm {
        Normalization::MinMax => (sorted[0], sorted[n - 1]),
        Normalization::Percentile { low, high } => {
            if !(0.0 <= low && low < high && high <= 100.0) {
                return Err(CliError::Config(format!("percentiles need 0 <= low < high <= 100, got {low} and {high}")));
            }
            let k_lo = ((low / 100.0 * n as f64).floor() as usize).min(n - 1);
            let k_hi = ((high / 100.0 * n as f64).ceil() as usize).saturating_sub(1).clamp(k_lo, n - 1);
            (sorted[k_lo], sorted[k_hi])
        }
    };
    let below = values.iter().filter(|v| **v < lo).count();
    let above = values.iter().filter(|v| **v > hi).count();
    Ok(Window { lo, hi, below, above })
}

/// Quantizes to `0..=max_level`; a degenerate window gives mid-gray.
pub fn quantize(a: &Array2<f64>, w: &Window, max_level: u32) -> Array2<u32> {
    if !(w.hi > w.lo) {
        return a.mapv(|_| max_level.div_ceil(2));
    }
    let m = max_level as f64;
    a.mapv(|v| (((v - w.lo) / (w.hi - w.lo)).clamp(0.0, 1.0) * m).round() as u32)
}

/// `name.png` gets `name.png.json`, so it never clobbers a container sidecar.
pub fn image_sidecar(png: &Path) -> PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn export_image(run: &Run) -> Result<(), CliError> {
    let sec = require(&run.cfg.export, "export")?;
    let src = sec.input.clone();
    let c = read_container(&src)?;
    let a = c.to_f64().map_err(|e| CliError::Data(format!("{}: {e}", src.display())))?;
    let img: Array2<f64> = match (a.ndim(), sec.slice) {
        (2, _) => a.into_dimensionality::<Ix2>().expect("two axes"),
        (3, Some(k)) => {
            if k >= a.shape()[0] {
                return Err(CliError::Data(format!("slice {k} out of range 0..{}", a.shape()[0])));
            }
            a.index_axis(Axis(0), k).into_dimensionality::<Ix2>().expect("two axes").to_owned()
        }
        (d, _) => return Err(CliError::Data(format!("cannot export a {d}-dimensional array without a slice index"))),
    };
    if img.is_empty() || img.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Data("image is empty or has non-finite values".into()));
    }
    let max_level = match sec.bits {
        8 => 255,
        16 => 65535,
        b => return Err(CliError::Config(format!("export.bits must be 8 or 16, got {b}"))),
    };
    let values: Vec<f64> = img.iter().copied().collect();
    let w = window(&values, sec.normalization)?;
    let q = quantize(&img, &w, max_level);
    let (rows, cols) = img.dim();
    let dynimg = if sec.bits == 8 {
        DynamicImage::ImageLuma8(ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
            Luma([q[[y as usize, x as usize]] as u8])
        }))
    } else {
        DynamicImage::ImageLuma16(ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
            Luma([q[[y as usize, x as usize]] as u16])
        }))
    };
    let mut png = Cursor::new(Vec::new());
    dynimg.write_to(&mut png, ImageFormat::Png).map_err(|e| CliError::Data(e.to_string()))?;
    let out = run.out.join(&sec.output);
    write_atomic(&out, png.get_ref())?;
    let (kind, low, high) = match sec.normalization {
        Normalization::MinMax => ("min_max", 0.0, 100.0),
        Normalization::Percentile { low, high } => ("percentile", low, high),
    };
    let degenerate = !(w.hi > w.lo);
    let side = json!({
        "source": sec.input,
        "slice": sec.slice,
        "bits": sec.bits,
        "normalization": kind,
        "low_percent": low,
        "high_percent": high,
        "low_value": w.lo,
        "high_value": w.hi,
        "clipped_below": w.below,
        "clipped_above": w.above,
        "degenerate_range": degenerate,
        "mapping": if degenerate {
            "constant input: every pixel written as mid-gray".to_string()
        } else {
            format!("round((clamp(v, low_value, high_value) - low_value) / (high_value - low_value) * {max_level})")
        },
    });
    let text = serde_json::to_string_pretty(&side).map_err(|e| CliError::Data(e.to_string()))?;
    write_atomic(&image_sidecar(&out), format!("{text}\n").as_bytes())?;
    println!("wrote {} ({rows} x {cols}, {}-bit)", out.display(), sec.bits);
    Ok(())
}
