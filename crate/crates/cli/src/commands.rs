//! Simulation, reconstruction and analysis commands.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, Ix2, Ix3};
use phasenewton::analysis::{formfactor_deconvolve, fsc, locate_peaks, resolution_from_fsc, PeakSet};
use phasenewton::io::{append_history, write_atomic, ArrayContainer, Metadata};
use phasenewton::kaczmarz::{build_schedule, kaczmarz_reconstruct};
use phasenewton::operators::{
    ctf_invert_homogeneous, pc_forward, tomo_forward, PhaseContrastOperator, PhaseContrastProblem, TomoOperator,
    TomoProblem, Volume3D,
};
use phasenewton::phantom::{
    add_noise, close_packed, jitter, random_packing, render_packing, render_phantom2d, SpherePacking,
};
use phasenewton::solver::irgnm;
use phasenewton::{ConstraintSpec, GramianSpec, ImagingGeometry, Padding, StepRecord, WedgeOrder};
use serde_json::json;

use crate::config::{require, PackingSection};
use crate::error::CliError;
use crate::Run;

// Offsets of the per-purpose seeds derived from the master seed.
const PACKING_SEED: u64 = 1;
const JITTER_SEED: u64 = 2;
const SCHEDULE_SEED: u64 = 3;

pub fn read_container(path: &Path) -> Result<ArrayContainer, CliError> {
    ArrayContainer::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_real<D: ndarray::Dimension>(path: &Path) -> Result<(ndarray::Array<f64, D>, Metadata), CliError> {
    let c = read_container(path)?;
    let a = c.to_f64().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let nd = a.ndim();
    let a = a
        .into_dimensionality::<D>()
        .map_err(|_| CliError::Data(format!("{}: unexpected dimensionality {nd}", path.display())))?;
    Ok((a, c.meta))
}

fn write_real<D: ndarray::Dimension>(
    dir: &Path,
    name: &str,
    a: &ndarray::Array<f64, D>,
    fill: impl FnOnce(&mut Metadata),
) -> Result<(), CliError> {
    let mut c = ArrayContainer::from_f64(a.clone().into_dyn());
    fill(&mut c.meta);
    c.write(&dir.join(name))?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))?;
    write_atomic(path, format!("{text}\n").as_bytes())?;
    Ok(())
}

fn write_history(path: &Path, steps: &[StepRecord]) -> Result<(), CliError> {
    if path.exists() {
        fs::remove_file(path)?;
    }
    append_history(path, steps)?;
    Ok(())
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Voxel size and projection factor for the tomographic model: physical
/// units when a wavenumber is given, voxel units otherwise.
fn projection_scaling(geom: &ImagingGeometry) -> (f64, f64) {
    match geom.wavenumber {
        Some(k) => (geom.pixel_size, k),
        None => (1.0, 1.0),
    }
}

fn geometry_for(run: &Run, meta: &Metadata) -> Result<ImagingGeometry, CliError> {
    if let Some(g) = run.cfg.geometry {
        g.validate()?;
        return Ok(g);
    }
    let nf = meta
        .fresnel_number
        .ok_or_else(|| CliError::Data("missing geometry: no [geometry] section and no fresnel_number in metadata".into()))?;
    let mut g = ImagingGeometry::new(nf).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(a) = meta.pixel_size_nm {
        g.pixel_size = a;
    }
    Ok(g)
}

pub fn simulate(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let geom = *require(&cfg.geometry, "geometry")?;
    geom.validate()?;
    let noise = require(&cfg.noise, "noise")?.model(cfg.seed);
    match (&cfg.phantom2d, &cfg.packing) {
        (Some(spec), None) => {
            let obj = render_phantom2d(spec)?;
            let clean = pc_forward(&obj, &geom)?;
            let (holo, eps) = match &noise {
                Some(m) => add_noise(&clean, m)?,
                None => (clean, 0.0),
            };
            let px = |m: &mut Metadata| {
                m.axis_labels = labels(&["y", "x"]);
                m.pixel_size_nm = Some(geom.pixel_size);
                m.fresnel_number = Some(geom.fresnel_number);
            };
            write_real(&run.out, "phantom_phi.bin", &obj.phase(), px)?;
            write_real(&run.out, "phantom_mu.bin", &obj.absorption(), px)?;
            write_real(&run.out, "hologram.bin", &holo, |m| {
                px(m);
                m.noise_norm = Some(eps);
            })?;
            println!("noise norm: {eps:.9e}");
            Ok(())
        }
        (None, Some(p)) => simulate_tomo(run, &geom, p, noise),
        (Some(_), Some(_)) => Err(CliError::Config("give either [phantom2d] or [packing], not both".into())),
        (None, None) => Err(CliError::Config("missing [phantom2d] or [packing] section".into())),
    }
}

fn packing_centers(p: &PackingSection, seed: u64) -> Result<Vec<[f64; 3]>, CliError> {
    let centers = match (&p.centers, &p.lattice, p.count) {
        (Some(c), None, None) => c.clone(),
        (None, Some(l), None) => close_packed(l.kind, l.counts, p.radius, l.origin),
        (None, None, Some(n)) => {
            let region = p.region.unwrap_or(p.shape);
            if (0..3).any(|a| region[a] > p.shape[a] || region[a] == 0) {
                return Err(CliError::Config("packing.region must fit inside packing.shape".into()));
            }
            let mut c = random_packing(n, p.radius, p.gap, (region[0], region[1], region[2]), seed + PACKING_SEED, 1_000_000);
            if c.len() < n {
                return Err(CliError::Config(format!("packing.count: only {} of {n} spheres fit", c.len())));
            }
            let off = [0, 1, 2].map(|a| ((p.shape[a] - region[a]) / 2) as f64);
            c.iter_mut().for_each(|x| (0..3).for_each(|a| x[a] += off[a]));
            c
        }
        _ => return Err(CliError::Config("packing needs exactly one of centers, lattice or count".into())),
    };
    let centers = if p.jitter > 0.0 { jitter(&centers, p.jitter, seed + JITTER_SEED)? } else { centers };
    Ok(centers)
}

fn simulate_tomo(
    run: &Run,
    geom: &ImagingGeometry,
    p: &PackingSection,
    noise: Option<phasenewton::phantom::NoiseModel>,
) -> Result<(), CliError> {
    let angles_sec = require(&run.cfg.angles, "angles")?;
    if angles_sec.count == 0 {
        return Err(CliError::Config("angles.count must be >= 1".into()));
    }
    let shape = (p.shape[0], p.shape[1], p.shape[2]);
    let centers = packing_centers(p, run.cfg.seed)?;
    let packing = SpherePacking { centers: centers.clone(), radius: p.radius, delta_value: p.delta, beta_value: p.beta };
    let (voxel, scale) = projection_scaling(geom);
    let mut vol = render_packing(&packing, shape)?;
    vol.voxel_size = voxel;
    let angles_deg: Vec<f64> =
        (0..angles_sec.count).map(|k| k as f64 * angles_sec.range_deg / angles_sec.count as f64).collect();
    let angles: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let clean = tomo_forward(&vol, &angles, geom, scale)?.frames;
    let (holo, eps) = match &noise {
        Some(m) => add_noise(&clean, m)?,
        None => (clean, 0.0),
    };
    let vox = |m: &mut Metadata| {
        m.axis_labels = labels(&["x", "y", "z"]);
        m.pixel_size_nm = Some(geom.pixel_size);
    };
    write_real(&run.out, "phantom_delta.bin", &vol.delta(), vox)?;
    write_real(&run.out, "phantom_beta.bin", &vol.beta(), vox)?;
    write_real(&run.out, "holograms.bin", &holo, |m| {
        m.axis_labels = labels(&["angle", "y", "x"]);
        m.pixel_size_nm = Some(geom.pixel_size);
        m.fresnel_number = Some(geom.fresnel_number);
        m.angles_deg = Some(angles_deg.clone());
        m.noise_norm = Some(eps);
    })?;
    let truth = PeakSet { amplitudes: vec![p.delta; centers.len()], positions: centers };
    let mut csv = Vec::new();
    truth.write_csv(&mut csv, geom.pixel_size)?;
    write_atomic(&run.out.join("centers.csv"), &csv)?;
    println!("spheres: {}", truth.len());
    println!("noise norm: {eps:.9e}");
    Ok(())
}

fn constraint_spec(run: &Run, shape: &[usize]) -> Result<ConstraintSpec, CliError> {
    let c = &run.cfg.constraints;
    let mut mask: Option<ArrayD<bool>> = None;
    if let Some(r) = c.support_radius {
        if !(r > 0.0) {
            return Err(CliError::Config("constraints.support_radius must be positive".into()));
        }
        // circle in the last two axes, centered on the grid
        let n = shape.len();
        let (ca, cb) = ((shape[n - 2] as f64 - 1.0) / 2.0, (shape[n - 1] as f64 - 1.0) / 2.0);
        mask = Some(ArrayD::from_shape_fn(shape, |ix| {
            (ix[n - 2] as f64 - ca).powi(2) + (ix[n - 1] as f64 - cb).powi(2) < r * r
        }));
    }
    if let Some(p) = &c.support_mask {
        let m = read_container(p)?.to_c128().mapv(|z| z.norm() > 0.0);
        if m.shape() != shape {
            return Err(CliError::Data(format!("support mask has shape {:?}, expected {shape:?}", m.shape())));
        }
        mask = Some(match mask {
            Some(a) => ndarray::Zip::from(&a).and(&m).map_collect(|x, y| *x && *y),
            None => m,
        });
    }
    let spec = ConstraintSpec {
        support_mask: mask,
        homogeneous_ratio: c.homogeneous_ratio,
        real_valued: c.real_valued,
        sign: c.sign,
        penalty_weight: c.penalty_weight,
    };
    spec.validate(shape)?;
    Ok(spec)
}

pub fn reconstruct2d(run: &Run, ctf_flag: bool) -> Result<(), CliError> {
    let sec = require(&run.cfg.reconstruct, "reconstruct")?;
    let (holo, meta) = read_real::<Ix2>(&sec.input)?;
    let geom = geometry_for(run, &meta)?;
    let shape = holo.dim();
    let cons = constraint_spec(run, &[shape.0, shape.1])?;
    let gram = if sec.sobolev > 0.0 { GramianSpec::Sobolev(sec.sobolev) } else { GramianSpec::Identity };
    let noise_norm = match (sec.noise_norm, sec.discrepancy) {
        (Some(e), _) => Some(e),
        (None, true) => Some(meta.noise_norm.ok_or_else(|| {
            CliError::Data("discrepancy stopping needs noise_norm in the input metadata or [reconstruct]".into())
        })?),
        (None, false) => None,
    };
    let op = PhaseContrastOperator::new(shape, geom, sec.padding)?;
    let prob = PhaseContrastProblem::new(op, &cons, gram)?;
    let data = Array1::from_iter(holo.iter().copied());
    let res = irgnm(&prob, &data, noise_norm, &run.cfg.solver)?;
    let obj = prob.object(&res.params);
    let px = |m: &mut Metadata| {
        m.axis_labels = labels(&["y", "x"]);
        m.pixel_size_nm = Some(geom.pixel_size);
        m.fresnel_number = Some(geom.fresnel_number);
    };
    write_real(&run.out, "phi.bin", &obj.phase(), px)?;
    write_real(&run.out, "mu.bin", &obj.absorption(), px)?;
    write_history(&run.out.join("history.jsonl"), &res.steps)?;
    write_json(
        &run.out.join("summary.json"),
        &json!({
            "stop_reason": res.stop_reason,
            "newton_steps": res.newton_count,
            "endgame_steps": res.endgame_count,
            "alpha0": res.alpha0,
            "initial_residual": res.residual_history.first(),
            "final_residual": res.residual_history.last(),
            "cg_iterations": res.total_cg(),
        }),
    )?;
    println!(
        "{:?} after {} Newton steps (+{} endgame), residual {:.6e}",
        res.stop_reason,
        res.newton_count,
        res.endgame_count,
        res.residual_history.last().copied().unwrap_or(f64::NAN)
    );
    if ctf_flag || sec.ctf {
        let c = run.cfg.constraints.homogeneous_ratio.ok_or_else(|| {
            CliError::Config("CTF mode needs constraints.homogeneous_ratio".into())
        })?;
        let phi = ctf_invert_homogeneous(&holo, c, &geom, sec.ctf_reg)?;
        write_real(&run.out, "phi_ctf.bin", &phi, px)?;
        println!("CTF inversion written");
    }
    Ok(())
}

struct TomoInput {
    frames: Array3<f64>,
    angles: Vec<f64>,
    geom: ImagingGeometry,
}

fn tomo_run(run: &Run, input: &TomoInput, idx: &[usize], seed: u64, name: &str) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let (_, r, c) = input.frames.dim();
    let vol_shape = (r, c, c);
    let angles: Vec<f64> = idx.iter().map(|&i| input.angles[i]).collect();
    let (voxel, scale) = projection_scaling(&input.geom);
    let op = TomoOperator::new(vol_shape, angles, input.geom, Padding::None)?.with_scale(voxel, scale)?;
    let cons = constraint_spec(run, &[r, c, c])?;
    let prob = TomoProblem::new(op, &cons)?;
    let mut data = Array2::zeros((idx.len(), r * c));
    for (k, &i) in idx.iter().enumerate() {
        data.row_mut(k).assign(&Array1::from_iter(input.frames.index_axis(Axis(0), i).iter().copied()));
    }
    let order = if cfg.schedule.random_order { WedgeOrder::Random { seed } } else { WedgeOrder::Sequential };
    let sched = build_schedule(idx.len(), cfg.schedule.wedge, cfg.schedule.passes, order)?;
    let x0 = Array1::zeros(prob.parametrization().len());
    let res = kaczmarz_reconstruct(&prob, &data, &x0, &sched, &cfg.kaczmarz)?;
    let v = Volume3D { v: prob.volume(&res.recon.params), voxel_size: voxel };
    let vox = |m: &mut Metadata| {
        m.axis_labels = labels(&["x", "y", "z"]);
        m.pixel_size_nm = Some(input.geom.pixel_size);
    };
    write_real(&run.out, &format!("{name}delta.bin"), &v.delta(), vox)?;
    if !cons.real_valued {
        write_real(&run.out, &format!("{name}beta.bin"), &v.beta(), vox)?;
    }
    write_history(&run.out.join(format!("{name}history.jsonl")), &res.recon.steps)?;
    write_json(
        &run.out.join(format!("{name}summary.json")),
        &json!({
            "frames": idx.len(),
            "wedges": sched.len(),
            "alpha0": res.recon.alpha0,
            "initial_residual": res.initial_residual,
            "final_residual": res.final_residual,
            "pass_residuals": res.pass_residuals,
            "cg_iterations": res.recon.total_cg(),
        }),
    )?;
    println!(
        "{}{} wedge steps, residual {:.6e} -> {:.6e}",
        if name.is_empty() { String::new() } else { format!("{}: ", name.trim_end_matches('_')) },
        sched.len(),
        res.initial_residual,
        res.final_residual
    );
    Ok(())
}

pub fn reconstruct_tomo(run: &Run, split_flag: bool) -> Result<(), CliError> {
    let sec = require(&run.cfg.reconstruct, "reconstruct")?;
    let (frames, meta) = read_real::<Ix3>(&sec.input)?;
    let angles = meta
        .angles_deg
        .as_ref()
        .ok_or_else(|| CliError::Data("angles missing from the input metadata".into()))?
        .iter()
        .map(|a| a.to_radians())
        .collect::<Vec<_>>();
    let geom = geometry_for(run, &meta)?;
    let input = TomoInput { frames, angles, geom };
    let n = input.angles.len();
    let seed = run.cfg.seed + SCHEDULE_SEED;
    let all: Vec<usize> = (0..n).collect();
    tomo_run(run, &input, &all, seed, "")?;
    if split_flag || sec.split_half {
        let even: Vec<usize> = (0..n).step_by(2).collect();
        let odd: Vec<usize> = (1..n).step_by(2).collect();
        tomo_run(run, &input, &even, seed + 1, "half_a_")?;
        tomo_run(run, &input, &odd, seed + 2, "half_b_")?;
    }
    Ok(())
}

fn voxel_size_of(explicit: Option<f64>, meta: &Metadata) -> f64 {
    explicit.or(meta.pixel_size_nm).unwrap_or(1.0)
}

pub fn analyze_fsc(run: &Run) -> Result<(), CliError> {
    let sec = require(&run.cfg.fsc, "fsc")?;
    let (a, meta) = read_real::<Ix3>(&sec.a)?;
    let (b, _) = read_real::<Ix3>(&sec.b)?;
    if a.dim() != b.dim() {
        return Err(CliError::Data(format!("volume shapes differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    let curve = fsc(&a, &b, sec.shells)?;
    let voxel = voxel_size_of(sec.voxel_size_nm, &meta);
    let res = resolution_from_fsc(&curve, voxel);
    let mut text = String::from("# frequency_cycles_per_voxel correlation half_bit_threshold\n");
    for k in 0..curve.len() {
        text.push_str(&format!("{} {} {}\n", curve.shell_centers[k], curve.correlation[k], curve.threshold[k]));
    }
    write_atomic(&run.out.join("fsc.txt"), text.as_bytes())?;
    write_json(&run.out.join("fsc.json"), &json!({ "curve": curve, "resolution": res, "voxel_size_nm": voxel }))?;
    if res.nyquist_limited {
        println!("resolution: Nyquist-limited (half-period {:.4} nm)", res.half_period);
    } else {
        println!("resolution: {:.4} nm half-period at {:.5} cycles/voxel", res.half_period, res.frequency);
    }
    Ok(())
}

pub fn analyze_localize(run: &Run) -> Result<(), CliError> {
    let sec = require(&run.cfg.localize, "localize")?;
    let (vol, meta) = read_real::<Ix3>(&sec.input)?;
    let work = if sec.raw { vol } else { formfactor_deconvolve(&vol, sec.diameter, sec.fwhm, sec.reg)? };
    let peaks = locate_peaks(&work, sec.min_separation.unwrap_or(sec.diameter / 2.0), sec.threshold)?;
    let mut csv = Vec::new();
    peaks.write_csv(&mut csv, voxel_size_of(sec.voxel_size_nm, &meta))?;
    write_atomic(&run.out.join("peaks.csv"), &csv)?;
    println!("peaks: {}", peaks.len());
    Ok(())
}
