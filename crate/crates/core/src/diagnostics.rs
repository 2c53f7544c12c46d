//! Quality metrics, the finite-difference gradient harness and the
//! smallest-eigenvalue probe.

use crate::error::{Error, Result};
use crate::mesh::SimplicialSurface;
use crate::sphere::{count_folds, SphericalMapping};
use crate::Vec3;

mod eigen;

pub use eigen::{smallest_eigenvalue, smallest_hessian_eigenvalue, EigenMode, HessianProbeResult, ProbeOptions};

/// Distribution of per-face ratios |f(τ)|/|τ|.
#[derive(Debug, Clone)]
pub struct AreaRatioStats {
    pub ratios: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub sd_over_mean: f64,
}

impl AreaRatioStats {
    pub fn from_ratios(ratios: Vec<f64>) -> Self {
        let m = ratios.len().max(1) as f64;
        let mean = ratios.iter().sum::<f64>() / m;
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / m;
        let sd = var.sqrt();
        let sd_over_mean = if mean > 0.0 { sd / mean } else { f64::INFINITY };
        Self {
            ratios,
            mean,
            sd,
            sd_over_mean,
        }
    }
}

pub fn area_ratio_stats(surface: &SimplicialSurface, f: &[Vec3]) -> Result<AreaRatioStats> {
    if f.len() != surface.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: surface.num_vertices(),
            got: f.len(),
        });
    }
    let ratios = surface
        .faces()
        .iter()
        .zip(surface.face_areas())
        .enumerate()
        .map(|(t, (&[i, j, k], &area))| {
            if !(area > 0.0) {
                return Err(Error::DegenerateReferenceFace { face: t });
            }
            Ok(0.5 * (f[j] - f[i]).cross(&(f[k] - f[i])).norm() / area)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AreaRatioStats::from_ratios(ratios))
}

/// Everything logged about a mapping of the reference surface.
#[derive(Debug, Clone, Copy)]
pub struct MappingMetrics {
    pub stretch: f64,
    pub image_area: f64,
    pub authalic: f64,
    pub normalized: f64,
    pub sd_over_mean: f64,
    pub folds: usize,
}

pub fn mapping_metrics(surface: &SimplicialSurface, f: &SphericalMapping) -> Result<MappingMetrics> {
    let report = crate::energy::evaluate_energy(surface, f.rows())?;
    let stats = area_ratio_stats(surface, f.rows())?;
    Ok(MappingMetrics {
        stretch: report.stretch,
        image_area: report.image_area,
        authalic: report.authalic,
        normalized: report.normalized,
        sd_over_mean: stats.sd_over_mean,
        folds: count_folds(surface, f),
    })
}

/// #V · |E_A(noisy) − E_A(clean)| / Σ_v ‖ṽ − v‖.
pub fn authalic_error(
    noisy: &SimplicialSurface,
    clean: &SimplicialSurface,
    ea_noisy: f64,
    ea_clean: f64,
) -> Result<f64> {
    if noisy.num_vertices() != clean.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: clean.num_vertices(),
            got: noisy.num_vertices(),
        });
    }
    if noisy.faces() != clean.faces() {
        return Err(Error::InvalidArgument("meshes differ in topology".into()));
    }
    let displacement: f64 = noisy
        .vertices()
        .iter()
        .zip(clean.vertices())
        .map(|(a, b)| (a - b).norm())
        .sum();
    if displacement == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    Ok(noisy.num_vertices() as f64 * (ea_noisy - ea_clean).abs() / displacement)
}

/// Result of comparing the analytic gradient of E with central differences.
#[derive(Debug, Clone, Copy)]
pub struct FdCheck {
    pub max_relative_error: f64,
    pub entries_checked: usize,
}

/// Smallest and largest allowed difference steps.
pub const FD_STEP_RANGE: (f64, f64) = (1e-8, 1e-2);
/// Entries of smaller magnitude are skipped.
pub const FD_MIN_ENTRY: f64 = 1e-8;

fn twice_area_vector(a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

/// Central differences of E = |M| E_S / A against [`crate::energy::euclidean_gradient`].
///
/// Each difference E(f + h e) − E(f − h e) only involves the star of one
/// vertex, and is accumulated from per-face changes: with twice-area
/// vectors c± = c₀ ± h c₁, the stretch change is h c₀·c₁/|τ| and the area
/// change is 2h c₀·c₁/(|c₊| + |c₋|), so no large totals are subtracted.
pub fn fd_check_gradient(surface: &SimplicialSurface, f: &[Vec3], step: f64) -> Result<FdCheck> {
    if !(FD_STEP_RANGE.0..=FD_STEP_RANGE.1).contains(&step) {
        return Err(Error::InvalidArgument(format!(
            "step {step} outside [{}, {}]",
            FD_STEP_RANGE.0, FD_STEP_RANGE.1
        )));
    }
    let (report, grad) = crate::energy::energy_and_gradient(surface, f)?;
    let s0 = report.stretch;
    let a0 = report.image_area;
    let m = surface.total_area();

    let mut star: Vec<Vec<usize>> = vec![Vec::new(); surface.num_vertices()];
    for (t, face) in surface.faces().iter().enumerate() {
        for &v in face {
            star[v].push(t);
        }
    }

    let mut worst = 0.0_f64;
    let mut checked = 0;
    for v in 0..surface.num_vertices() {
        for c in 0..3 {
            let g = grad[v][c];
            if g.abs() <= FD_MIN_ENTRY {
                continue;
            }
            let mut dir = Vec3::zeros();
            dir[c] = step;
            let (mut ds_plus, mut ds_minus, mut da_plus, mut da_minus) = (0.0, 0.0, 0.0, 0.0);
            for &t in &star[v] {
                let face = surface.faces()[t];
                let r = face.iter().position(|&w| w == v).unwrap();
                let (next, prev) = (face[(r + 1) % 3], face[(r + 2) % 3]);
                let c0 = twice_area_vector(f[face[0]], f[face[1]], f[face[2]]);
                // c = Σ_cyclic f_a × f_b, so moving f_v by δ adds δ × (f_next − f_prev)
                let c1 = dir.cross(&(f[next] - f[prev]));
                let (cp, cm) = (c0 + c1, c0 - c1);
                let area_ref = surface.face_areas()[t];
                let (np, nm, n0) = (cp.norm(), cm.norm(), c0.norm());
                let dot = c0.dot(&c1);
                let quad = c1.norm_squared();
                // stretch = |c|²/(4|τ|), area = |c|/2
                ds_plus += (2.0 * dot + quad) / (4.0 * area_ref);
                ds_minus += (-2.0 * dot + quad) / (4.0 * area_ref);
                da_plus += 0.5 * (2.0 * dot + quad) / (np + n0);
                da_minus += 0.5 * (-2.0 * dot + quad) / (nm + n0);
            }
            let a_plus = a0 + da_plus;
            let a_minus = a0 + da_minus;
            let num = s0 * (da_minus - da_plus) + a0 * (ds_plus - ds_minus) + ds_plus * da_minus - ds_minus * da_plus;
            let fd = m * num / (a_plus * a_minus) / (2.0 * step);
            if !fd.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite difference at vertex {v}")));
            }
            worst = worst.max((fd - g).abs() / g.abs());
            checked += 1;
        }
    }
    Ok(FdCheck {
        max_relative_error: worst,
        entries_checked: checked,
    })
}
