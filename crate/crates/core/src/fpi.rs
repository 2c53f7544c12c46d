//! Fixed-point iteration of stretch energy minimization, used as a warm
//! start, and the conformal initializer it starts from.

use std::time::Instant;

use num_complex::Complex64;

use crate::diagnostics::mapping_metrics;
use crate::energy::{assemble_laplacian, evaluate_energy};
use crate::error::{Error, Result};
use crate::linsolve::solve;
use crate::mesh::SimplicialSurface;
use crate::rgd::riemannian_gradient;
use crate::sparse::CsrMatrix;
use crate::sphere::{
    count_folds, invert_plane, inverse_stereographic, stereographic, PlanarMapping, PlanarPoint, SphericalMapping,
};

/// Split of the vertices by |h_i| < r.
#[derive(Debug, Clone, PartialEq)]
pub struct HemisphereIndexSets {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub radius: f64,
}

impl HemisphereIndexSets {
    /// The plain threshold rule.
    pub fn from_moduli(h: &PlanarMapping, radius: f64) -> Result<Self> {
        if !(radius > 1.0) {
            return Err(Error::InvalidArgument(format!("radius {radius} must exceed 1")));
        }
        let (interior, boundary) = (0..h.len()).partition(|&i| h.values[i].modulus() < radius);
        Ok(Self {
            interior,
            boundary,
            radius,
        })
    }

    /// Threshold rule, with every neighbor of a point at infinity moved to
    /// the boundary so the right-hand side stays finite.
    pub fn for_surface(surface: &SimplicialSurface, h: &PlanarMapping, radius: f64) -> Result<Self> {
        let mut sets = Self::from_moduli(h, radius)?;
        if h.infinity_count() == 0 {
            return Ok(sets);
        }
        let mut in_b = vec![false; h.len()];
        for &b in &sets.boundary {
            in_b[b] = true;
        }
        for &[a, b] in surface.edges() {
            if h.values[a] == PlanarPoint::Infinity {
                in_b[b] = true;
            }
            if h.values[b] == PlanarPoint::Infinity {
                in_b[a] = true;
            }
        }
        let (boundary, interior) = (0..h.len()).partition(|&i| in_b[i]);
        sets.interior = interior;
        sets.boundary = boundary;
        Ok(sets)
    }
}

/// Solves L_II h̃_I = −L_IB h_B for the real and imaginary parts and
/// returns h with the interior rows replaced.
pub fn solve_interior(l: &CsrMatrix, h: &PlanarMapping, sets: &HemisphereIndexSets) -> Result<PlanarMapping> {
    if sets.interior.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let l_ii = l.extract(&sets.interior, &sets.interior);
    let l_ib = l.extract(&sets.interior, &sets.boundary);
    let mut re = vec![0.0; sets.interior.len()];
    let mut im = vec![0.0; sets.interior.len()];
    for r in 0..sets.interior.len() {
        for (c, w) in l_ib.row(r) {
            if w == 0.0 {
                continue;
            }
            let z = h.values[sets.boundary[c]]
                .finite()
                .ok_or(Error::InvalidArgument("interior vertex adjacent to infinity".into()))?;
            re[r] -= w * z.re;
            im[r] -= w * z.im;
        }
    }
    let x = solve(&l_ii, &[re, im])?;
    let mut out = h.clone();
    for (r, &i) in sets.interior.iter().enumerate() {
        out.values[i] = PlanarPoint::Finite(Complex64::new(x[0][r], x[1][r]));
    }
    Ok(out)
}

/// Median of |h_ℓ|, averaging the two middle values for even counts.
pub fn median_modulus(h: &PlanarMapping) -> f64 {
    let mut m: Vec<f64> = h.values.iter().map(|p| p.modulus()).collect();
    if m.is_empty() {
        return f64::NAN;
    }
    m.sort_by(f64::total_cmp);
    let n = m.len();
    if n % 2 == 1 {
        m[n / 2]
    } else {
        0.5 * (m[n / 2 - 1] + m[n / 2])
    }
}

pub fn scale_plane(h: &PlanarMapping, s: f64) -> PlanarMapping {
    PlanarMapping {
        values: h
            .values
            .iter()
            .map(|p| match p {
                PlanarPoint::Finite(z) => PlanarPoint::Finite(z * s),
                PlanarPoint::Infinity => PlanarPoint::Infinity,
            })
            .collect(),
    }
}

/// 4√3·area / Σ edge², which is 1 for an equilateral triangle.
fn regularity(surface: &SimplicialSurface, t: usize) -> f64 {
    let [i, j, k] = surface.faces()[t];
    let v = surface.vertices();
    let sq = (v[j] - v[i]).norm_squared() + (v[k] - v[j]).norm_squared() + (v[i] - v[k]).norm_squared();
    4.0 * 3f64.sqrt() * surface.face_areas()[t] / sq
}

/// A fold-free spherical map on well-shaped meshes.
///
/// The most regular face is removed and pinned to an equilateral triangle,
/// the rest of the mesh is placed by the cotangent Laplacian of the
/// reference geometry, the plane is centered and scaled to unit median
/// modulus, and the result is lifted by inverse stereographic projection.
pub fn conformal_initial_map(surface: &SimplicialSurface) -> Result<SphericalMapping> {
    let n = surface.num_vertices();
    let puncture = (0..surface.num_faces())
        .max_by(|&a, &b| regularity(surface, a).total_cmp(&regularity(surface, b)).then(b.cmp(&a)))
        .ok_or(Error::EmptyInterior)?;
    let pinned = surface.faces()[puncture];
    // with f the identity, L_S is the cotangent Laplacian with weights cot/2
    let l = assemble_laplacian(surface, surface.vertices())?;

    let mut h = PlanarMapping {
        values: vec![PlanarPoint::Finite(Complex64::new(0.0, 0.0)); n],
    };
    for (c, &v) in pinned.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * c as f64 / 3.0;
        h.values[v] = PlanarPoint::Finite(Complex64::from_polar(1.0, theta));
    }
    let mut boundary = pinned.to_vec();
    boundary.sort_unstable();
    let sets = HemisphereIndexSets {
        interior: (0..n).filter(|v| !pinned.contains(v)).collect(),
        boundary,
        radius: f64::INFINITY,
    };
    let h = solve_interior(&l, &h, &sets)?;

    let zs: Vec<Complex64> = h.values.iter().map(|p| p.finite().unwrap_or_default()).collect();
    let center = zs.iter().sum::<Complex64>() / n as f64;
    let centered = PlanarMapping {
        values: zs.iter().map(|z| PlanarPoint::Finite(z - center)).collect(),
    };
    let med = median_modulus(&centered);
    if !(med > 0.0) || !med.is_finite() {
        return Err(Error::DegeneratePlane(med));
    }
    let scaled = scale_plane(&centered, 1.0 / med);
    let conj = PlanarMapping {
        values: scaled
            .values
            .iter()
            .map(|p| match p {
                PlanarPoint::Finite(z) => PlanarPoint::Finite(z.conj()),
                PlanarPoint::Infinity => PlanarPoint::Infinity,
            })
            .collect(),
    };
    // the plane has no preferred orientation; keep the lift with fewer folds
    let a = inverse_stereographic(&scaled);
    let b = inverse_stereographic(&conj);
    Ok(if count_folds(surface, &b) < count_folds(surface, &a) {
        b
    } else {
        a
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FpiConfig {
    /// Stop once E_S decreases by at most this in one iteration.
    pub epsilon: f64,
    pub radius: f64,
    pub max_iters: usize,
    /// Stop at the first increase of E_A and return the iterate before it.
    pub stop_on_increase: bool,
}

impl Default for FpiConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            radius: 1.2,
            max_iters: 10,
            stop_on_increase: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FpiRecord {
    /// 0 for the starting map.
    pub iter: usize,
    pub stretch: f64,
    pub authalic: f64,
    pub normalized: f64,
    pub sd_over_mean: f64,
    /// ‖grad E‖_F, for logs shared with the descent stage.
    pub grad_norm: f64,
    pub folds: usize,
    /// E_S before minus E_S after this iteration; NaN for the start.
    pub delta: f64,
    pub interior: usize,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpiStop {
    Converged,
    EnergyIncreased,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct FpiResult {
    pub f: SphericalMapping,
    /// Record 0 describes the starting map.
    pub records: Vec<FpiRecord>,
    /// First iteration whose E_A exceeded its predecessor's.
    pub first_increase_iter: Option<usize>,
    /// Iteration the returned map comes from.
    pub returned_iter: usize,
    pub stop: FpiStop,
    /// Whether every solve left the boundary rows bit-for-bit unchanged.
    pub boundary_fixed: bool,
}

fn record(surface: &SimplicialSurface, f: &SphericalMapping, iter: usize, delta: f64, interior: usize, t0: Instant) -> Result<FpiRecord> {
    let m = mapping_metrics(surface, f)?;
    Ok(FpiRecord {
        iter,
        stretch: m.stretch,
        authalic: m.authalic,
        normalized: m.normalized,
        sd_over_mean: m.sd_over_mean,
        grad_norm: riemannian_gradient(surface, f)?.norm_fro(),
        folds: m.folds,
        delta,
        interior,
        elapsed: t0.elapsed().as_secs_f64(),
    })
}

/// Each iteration inverts the plane, so the lift alternates between the
/// sphere and its mirror image; lifting from the frame of the starting map
/// keeps the orientation.
fn lift(h: &PlanarMapping, inverted: bool) -> SphericalMapping {
    if inverted {
        inverse_stereographic(&invert_plane(h))
    } else {
        inverse_stereographic(h)
    }
}

pub fn fpi_minimize(surface: &SimplicialSurface, f0: &SphericalMapping, config: &FpiConfig) -> Result<FpiResult> {
    if f0.len() != surface.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: surface.num_vertices(),
            got: f0.len(),
        });
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {} must be positive", config.epsilon)));
    }
    if !(config.radius > 1.0) {
        return Err(Error::InvalidArgument(format!("radius {} must exceed 1", config.radius)));
    }
    let t0 = Instant::now();
    let mut f = f0.clone();
    let mut h = stereographic(&f);
    let mut inverted = false;
    let mut stretch = evaluate_energy(surface, f.rows())?.stretch;
    let mut records = vec![record(surface, &f, 0, f64::NAN, 0, t0)?];
    let mut first_increase = None;
    let mut boundary_fixed = true;
    let mut stop = FpiStop::MaxIters;
    let mut best = (f.clone(), 0);

    for k in 1..=config.max_iters {
        let l = assemble_laplacian(surface, f.rows())?;
        h = invert_plane(&h);
        inverted = !inverted;
        let sets = HemisphereIndexSets::for_surface(surface, &h, config.radius)?;
        let solved = solve_interior(&l, &h, &sets)?;
        boundary_fixed &= sets.boundary.iter().all(|&b| solved.values[b] == h.values[b]);
        let med = median_modulus(&solved);
        if !(med > 0.0) || !med.is_finite() {
            return Err(Error::DegeneratePlane(med));
        }
        h = scale_plane(&solved, 1.0 / med);
        let f_new = lift(&h, inverted);
        let stretch_new = evaluate_energy(surface, f_new.rows())?.stretch;
        let delta = stretch - stretch_new;
        let rec = record(surface, &f_new, k, delta, sets.interior.len(), t0)?;
        let increased = rec.authalic > records[k - 1].authalic;
        records.push(rec);
        f = f_new;
        stretch = stretch_new;
        if increased && first_increase.is_none() {
            first_increase = Some(k);
            if config.stop_on_increase {
                stop = FpiStop::EnergyIncreased;
                break;
            }
        }
        best = (f.clone(), k);
        if delta <= config.epsilon {
            stop = FpiStop::Converged;
            break;
        }
    }
    let (f_out, returned_iter) = if config.stop_on_increase { best } else { (f, records.len() - 1) };
    Ok(FpiResult {
        f: f_out,
        records,
        first_increase_iter: first_increase,
        returned_iter,
        stop,
        boundary_fixed,
    })
}
