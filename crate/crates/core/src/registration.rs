//! Landmark-aligned registration of two parameterized surfaces and the
//! linear homotopy between them.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::diagnostics::{mapping_metrics, MappingMetrics};
use crate::energy::evaluate_energy;
use crate::error::{Error, Result};
use crate::mesh::SimplicialSurface;
use crate::rgd::{minimize_objective, Objective, RgdResult, SolverConfig};
use crate::sphere::SphericalMapping;
use crate::Vec3;

/// Landmark rows, their targets and weights for one alignment.
#[derive(Debug, Clone)]
pub struct LandmarkTerm {
    pub rows: Vec<usize>,
    pub targets: Vec<Vec3>,
    pub lambdas: Vec<f64>,
}

impl LandmarkTerm {
    pub fn new(rows: Vec<usize>, targets: Vec<Vec3>, lambdas: Vec<f64>) -> Result<Self> {
        if targets.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                expected: rows.len(),
                got: targets.len(),
            });
        }
        if lambdas.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                expected: rows.len(),
                got: lambdas.len(),
            });
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(format!("landmark weight {l} must be positive")));
        }
        Ok(Self { rows, targets, lambdas })
    }

    /// The same weight for every landmark.
    pub fn uniform(rows: Vec<usize>, targets: Vec<Vec3>, lambda: f64) -> Result<Self> {
        let n = rows.len();
        Self::new(rows, targets, vec![lambda; n])
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.rows.iter().find(|&&r| r >= n) {
            Some(&r) => Err(Error::InvalidArgument(format!("landmark row {r} out of range for {n} vertices"))),
            None => Ok(()),
        }
    }

    /// Σ λ_i ‖h_{p_i} − c_i‖².
    pub fn energy(&self, h: &[Vec3]) -> f64 {
        self.rows
            .iter()
            .zip(&self.targets)
            .zip(&self.lambdas)
            .map(|((&p, c), l)| l * (h[p] - c).norm_squared())
            .sum()
    }

    /// Σ ‖h_{p_i} − c_i‖².
    pub fn squared_mismatch(&self, h: &[Vec3]) -> f64 {
        self.rows
            .iter()
            .zip(&self.targets)
            .map(|(&p, c)| (h[p] - c).norm_squared())
            .sum()
    }

    /// Mean great-circle angle between h_{p_i} and the direction of c_i.
    pub fn mean_geodesic_mismatch(&self, h: &[Vec3]) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(&p, c)| geodesic_distance(&h[p], c))
            .sum();
        total / self.rows.len() as f64
    }
}

/// Angle between the directions of a and b.
pub fn geodesic_distance(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// E_R(h) = E_S(h) + Σ λ_i ‖h_{p_i} − c_i‖², with E_S measured against
/// the spherical mesh.
pub fn registration_energy(sphere_mesh: &SimplicialSurface, h: &[Vec3], term: &LandmarkTerm) -> Result<f64> {
    term.check(h.len())?;
    Ok(evaluate_energy(sphere_mesh, h)?.stretch + term.energy(h))
}

/// ∇E_R = 2 L_S(h) hˢ + rˢ, with r rows 2λ_i(h_{p_i} − c_i) on landmarks.
pub fn registration_energy_gradient(sphere_mesh: &SimplicialSurface, h: &[Vec3], term: &LandmarkTerm) -> Result<Vec<Vec3>> {
    term.check(h.len())?;
    let mut g = crate::energy::stretch_gradient(sphere_mesh, h)?;
    for ((&p, c), l) in term.rows.iter().zip(&term.targets).zip(&term.lambdas) {
        g[p] += 2.0 * l * (h[p] - c);
    }
    Ok(g)
}

/// E_R as an objective for the descent driver.
pub struct RegistrationObjective<'a> {
    pub sphere_mesh: &'a SimplicialSurface,
    pub term: &'a LandmarkTerm,
    /// Stop once the mean geodesic mismatch falls below this.
    pub mismatch_tol: f64,
}

impl Objective for RegistrationObjective<'_> {
    fn value(&self, f: &SphericalMapping) -> Result<f64> {
        registration_energy(self.sphere_mesh, f.rows(), self.term)
    }

    fn value_and_gradient(&self, f: &SphericalMapping) -> Result<(f64, Vec<Vec3>)> {
        let value = self.value(f)?;
        Ok((value, registration_energy_gradient(self.sphere_mesh, f.rows(), self.term)?))
    }

    fn metrics(&self, f: &SphericalMapping) -> Result<MappingMetrics> {
        mapping_metrics(self.sphere_mesh, f)
    }

    fn target_reached(&self, f: &SphericalMapping) -> bool {
        self.term.mean_geodesic_mismatch(f.rows()) < self.mismatch_tol
    }

    fn stall_measure(&self, value: f64, _metrics: &MappingMetrics) -> f64 {
        value
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AlignmentConfig {
    pub solver: SolverConfig,
    pub mismatch_tol: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                max_iters: 200,
                ..SolverConfig::default()
            },
            mismatch_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub h: SphericalMapping,
    pub run: RgdResult,
    pub mismatch_before: f64,
    pub mismatch_after: f64,
}

/// Moves the landmark images of the spherical mesh toward their targets by
/// descent on E_R, starting from the identity h = f.
pub fn solve_alignment(f_param: &SimplicialSurface, term: &LandmarkTerm, config: &AlignmentConfig) -> Result<AlignmentResult> {
    term.check(f_param.num_vertices())?;
    let h0 = SphericalMapping::new(f_param.vertices().to_vec())?;
    let obj = RegistrationObjective {
        sphere_mesh: f_param,
        term,
        mismatch_tol: config.mismatch_tol,
    };
    let mismatch_before = term.mean_geodesic_mismatch(h0.rows());
    let run = minimize_objective(&obj, h0, &config.solver)?;
    let mismatch_after = term.mean_geodesic_mismatch(run.f.rows());
    Ok(AlignmentResult {
        h: run.f.clone(),
        run,
        mismatch_before,
        mismatch_after,
    })
}

/// c_i = ½(f0(p_i) + f1(q_i)), optionally pushed to the unit sphere.
pub fn midpoints(f0: &SphericalMapping, f1: &SphericalMapping, pairs: &[(usize, usize)], normalize: bool) -> Result<Vec<Vec3>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, q))| {
            if p >= f0.len() || q >= f1.len() {
                return Err(Error::InvalidArgument(format!("landmark pair {i} out of range")));
            }
            let c = 0.5 * (f0.rows()[p] + f1.rows()[q]);
            if !normalize {
                return Ok(c);
            }
            let norm = c.norm();
            if !(norm >= crate::sphere::MIN_ROW_NORM) {
                return Err(Error::ZeroRow { row: i, norm });
            }
            Ok(c / norm)
        })
        .collect()
}

/// Face-level point location on a spherical triangulation.
pub struct SphericalLocator<'a> {
    points: &'a [Vec3],
    faces: &'a [[usize; 3]],
    normals: Vec<Vec3>,
    offsets: Vec<f64>,
    cells: HashMap<[i32; 3], Vec<usize>>,
    res: f64,
}

/// Where a point landed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub face: usize,
    /// Barycentric weights, each in [0, 1], summing to 1.
    pub weights: [f64; 3],
    /// Whether the nearest-face fallback was used.
    pub fallback: bool,
}

const INSIDE_TOL: f64 = 1e-10;

impl<'a> SphericalLocator<'a> {
    pub fn new(points: &'a [Vec3], faces: &'a [[usize; 3]]) -> Self {
        let m = faces.len().max(1);
        let per_axis = ((m as f64).sqrt().ceil() as usize).clamp(1, 256);
        let res = per_axis as f64 / 2.0;
        let mut normals = Vec::with_capacity(faces.len());
        let mut offsets = Vec::with_capacity(faces.len());
        let mut cells: HashMap<[i32; 3], Vec<usize>> = HashMap::new();
        for (t, &[i, j, k]) in faces.iter().enumerate() {
            let (a, b, c) = (points[i], points[j], points[k]);
            let n = (b - a).cross(&(c - a));
            let n = if n.norm() > 0.0 { n / n.norm() } else { n };
            let d = n.dot(&a);
            normals.push(n);
            offsets.push(d);
            // radial projection of the flat face moves points by at most 1 − d
            let pad = (1.0 - d.abs()).clamp(0.0, 2.0) + 1e-9;
            let lo = a.inf(&b).inf(&c).add_scalar(-pad);
            let hi = a.sup(&b).sup(&c).add_scalar(pad);
            let cell = |x: f64| ((x.clamp(-1.0, 1.0) + 1.0) * res).floor() as i32;
            for x in cell(lo.x)..=cell(hi.x) {
                for y in cell(lo.y)..=cell(hi.y) {
                    for z in cell(lo.z)..=cell(hi.z) {
                        cells.entry([x, y, z]).or_default().push(t);
                    }
                }
            }
        }
        Self {
            points,
            faces,
            normals,
            offsets,
            cells,
            res,
        }
    }

    /// Gnomonic barycentric coordinates of s in face t; `None` when s
    /// faces away from the face's plane.
    fn barycentric(&self, t: usize, s: &Vec3) -> Option<[f64; 3]> {
        let n = self.normals[t];
        let sn = s.dot(&n);
        if !(sn > 0.0) || !(self.offsets[t] > 0.0) {
            return None;
        }
        let q = s * (self.offsets[t] / sn);
        let [i, j, k] = self.faces[t];
        let (a, b, c) = (self.points[i], self.points[j], self.points[k]);
        let area = (b - a).cross(&(c - a)).dot(&n);
        if !(area > 0.0) {
            return None;
        }
        let wa = (b - q).cross(&(c - q)).dot(&n) / area;
        let wb = (c - q).cross(&(a - q)).dot(&n) / area;
        Some([wa, wb, 1.0 - wa - wb])
    }

    fn clamp(w: [f64; 3]) -> [f64; 3] {
        let c = w.map(|x| x.clamp(0.0, 1.0));
        let s: f64 = c.iter().sum();
        if s > 0.0 {
            c.map(|x| x / s)
        } else {
            [1.0 / 3.0; 3]
        }
    }

    fn best_of(&self, s: &Vec3, candidates: impl Iterator<Item = usize>) -> Option<(usize, [f64; 3], f64)> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in candidates {
            if let Some(w) = self.barycentric(t, s) {
                let score = w.iter().copied().fold(f64::INFINITY, f64::min);
                if best.is_none_or(|b| score > b.2) {
                    best = Some((t, w, score));
                }
            }
        }
        best
    }

    pub fn locate(&self, s: &Vec3) -> Location {
        let cell = |x: f64| ((x.clamp(-1.0, 1.0) + 1.0) * self.res).floor() as i32;
        let key = [cell(s.x), cell(s.y), cell(s.z)];
        let inside = self
            .cells
            .get(&key)
            .and_then(|c| self.best_of(s, c.iter().copied()))
            .filter(|b| b.2 >= -INSIDE_TOL);
        if let Some((face, w, _)) = inside {
            return Location {
                face,
                weights: Self::clamp(w),
                fallback: false,
            };
        }
        // nearest face by the least negative barycentric weight, else by
        // the closest centroid direction
        let face_and_w = self.best_of(s, 0..self.faces.len()).map(|b| (b.0, b.1)).unwrap_or_else(|| {
            let t = (0..self.faces.len())
                .max_by(|&a, &b| {
                    let ca: Vec3 = self.faces[a].iter().map(|&v| self.points[v]).sum();
                    let cb: Vec3 = self.faces[b].iter().map(|&v| self.points[v]).sum();
                    (ca.normalize().dot(s)).total_cmp(&cb.normalize().dot(s))
                })
                .unwrap_or(0);
            (t, [1.0 / 3.0; 3])
        });
        Location {
            face: face_and_w.0,
            weights: Self::clamp(face_and_w.1),
            fallback: true,
        }
    }
}

/// Per-vertex correspondence g: vertices of M0 → points on M1.
#[derive(Debug, Clone)]
pub struct Composition {
    pub points: Vec<Vec3>,
    pub locations: Vec<Location>,
    pub fallbacks: usize,
}

/// g = f1⁻¹ ∘ h1⁻¹ ∘ h0 ∘ f0 evaluated at every vertex of M0. `h0` and
/// `h1` hold the composed spherical images h0∘f0 and h1∘f1 per vertex.
pub fn compose_registration(
    m0: &SimplicialSurface,
    m1: &SimplicialSurface,
    h0: &SphericalMapping,
    h1: &SphericalMapping,
) -> Result<Composition> {
    if h0.len() != m0.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: m0.num_vertices(),
            got: h0.len(),
        });
    }
    if h1.len() != m1.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: m1.num_vertices(),
            got: h1.len(),
        });
    }
    let locator = SphericalLocator::new(h1.rows(), m1.faces());
    let locations: Vec<Location> = h0.rows().par_iter().map(|s| locator.locate(s)).collect();
    let points = locations
        .iter()
        .map(|loc| {
            let f = m1.faces()[loc.face];
            (0..3).map(|c| m1.vertices()[f[c]] * loc.weights[c]).sum()
        })
        .collect();
    let fallbacks = locations.iter().filter(|l| l.fallback).count();
    if fallbacks > 0 {
        log::warn!("{fallbacks} vertices used the nearest-face fallback");
    }
    Ok(Composition {
        points,
        locations,
        fallbacks,
    })
}

/// H(v, t) = (1 − t) v + t g(v).
pub fn homotopy_frame(m0: &[Vec3], g: &[Vec3], t: f64) -> Result<Vec<Vec3>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("homotopy parameter {t} outside [0, 1]")));
    }
    if m0.len() != g.len() {
        return Err(Error::ShapeMismatch {
            expected: m0.len(),
            got: g.len(),
        });
    }
    Ok(m0.iter().zip(g).map(|(v, w)| v * (1.0 - t) + w * t).collect())
}

/// Everything produced by one registration.
#[derive(Debug, Clone)]
pub struct Registration {
    pub targets: Vec<Vec3>,
    pub align0: AlignmentResult,
    pub align1: AlignmentResult,
    pub composition: Composition,
}

/// Aligns both parameterizations to the landmark midpoints and composes.
pub fn register(
    m0: &SimplicialSurface,
    m1: &SimplicialSurface,
    f0: &SphericalMapping,
    f1: &SphericalMapping,
    pairs: &[(usize, usize)],
    lambda: f64,
    normalize_midpoints: bool,
    config: &AlignmentConfig,
) -> Result<Registration> {
    let targets = midpoints(f0, f1, pairs, normalize_midpoints)?;
    let sphere0 = m0.with_vertices(f0.rows().to_vec())?;
    let sphere1 = m1.with_vertices(f1.rows().to_vec())?;
    let term0 = LandmarkTerm::uniform(pairs.iter().map(|p| p.0).collect(), targets.clone(), lambda)?;
    let term1 = LandmarkTerm::uniform(pairs.iter().map(|p| p.1).collect(), targets.clone(), lambda)?;
    let align0 = solve_alignment(&sphere0, &term0, config)?;
    let align1 = solve_alignment(&sphere1, &term1, config)?;
    let composition = compose_registration(m0, m1, &align0.h, &align1.h)?;
    Ok(Registration {
        targets,
        align0,
        align1,
        composition,
    })
}
