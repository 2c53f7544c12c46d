//! Stretch energy, image area and their derivatives.
//!
//! Functions take vertex images as plain `&[Vec3]` rows so that they can be
//! evaluated off the sphere (finite-difference checks, registration).

use nalgebra::SMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::SimplicialSurface;
use crate::sparse::CsrMatrix;
use crate::Vec3;

/// Image faces below this area make the cotangent weights blow up.
pub const DEGENERATE_AREA: f64 = 1e-14;

/// Per-face quantities of a simplicial mapping.
#[derive(Debug, Clone, Copy)]
pub struct FaceGeometry {
    pub f_ij: Vec3,
    pub f_ik: Vec3,
    /// f_j − f_k.
    pub f_jk: Vec3,
    pub a12: f64,
    pub a13: f64,
    pub a23: f64,
    pub image_area: f64,
    pub reference_area: f64,
    /// Cotangents of the image angles at corners i, j, k.
    pub cot: [f64; 3],
}

impl FaceGeometry {
    pub fn new(fi: Vec3, fj: Vec3, fk: Vec3, reference_area: f64) -> Self {
        let f_ij = fi - fj;
        let f_ik = fi - fk;
        let f_jk = fj - fk;
        let a12 = f_ij.x * f_ik.y - f_ij.y * f_ik.x;
        let a13 = f_ij.x * f_ik.z - f_ij.z * f_ik.x;
        let a23 = f_ij.y * f_ik.z - f_ij.z * f_ik.y;
        let image_area = 0.5 * (a12 * a12 + a13 * a13 + a23 * a23).sqrt();
        let twice = 2.0 * image_area;
        let cot = [
            (fj - fi).dot(&(fk - fi)) / twice,
            (fk - fj).dot(&(fi - fj)) / twice,
            (fi - fk).dot(&(fj - fk)) / twice,
        ];
        Self {
            f_ij,
            f_ik,
            f_jk,
            a12,
            a13,
            a23,
            image_area,
            reference_area,
            cot,
        }
    }

    /// Modified cotangent weights of edges (i,j), (j,k), (k,i), i.e. the
    /// weights whose opposite corners are k, i, j.
    pub fn stretch_weights(&self) -> [f64; 3] {
        let s = self.image_area / (2.0 * self.reference_area);
        [self.cot[2] * s, self.cot[0] * s, self.cot[1] * s]
    }

    /// Per-face stretch energy |f(τ)|²/|τ|.
    pub fn stretch(&self) -> f64 {
        self.image_area * self.image_area / self.reference_area
    }

    /// Gradient of the image area with respect to f_i, f_j, f_k.
    pub fn area_partials(&self) -> [Vec3; 3] {
        let (a12, a13, a23) = (self.a12, self.a13, self.a23);
        let (ij, ik, jk) = (&self.f_ij, &self.f_ik, &self.f_jk);
        let q = 1.0 / (4.0 * self.image_area);
        [
            Vec3::new(
                q * (a12 * jk.y + a13 * jk.z),
                -q * (a12 * jk.x - a23 * jk.z),
                -q * (a13 * jk.x + a23 * jk.y),
            ),
            Vec3::new(
                -q * (a12 * ik.y + a13 * ik.z),
                q * (a12 * ik.x - a23 * ik.z),
                q * (a13 * ik.x + a23 * ik.y),
            ),
            Vec3::new(
                q * (a12 * ij.y + a13 * ij.z),
                -q * (a12 * ij.x - a23 * ij.z),
                -q * (a13 * ij.x + a23 * ij.y),
            ),
        ]
    }
}

fn check_len(surface: &SimplicialSurface, f: &[Vec3]) -> Result<()> {
    if f.len() != surface.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: surface.num_vertices(),
            got: f.len(),
        });
    }
    Ok(())
}

/// Geometry of every face, failing on a degenerate image or reference face.
pub fn face_geometry(surface: &SimplicialSurface, f: &[Vec3]) -> Result<Vec<FaceGeometry>> {
    check_len(surface, f)?;
    surface
        .faces()
        .par_iter()
        .zip(surface.face_areas().par_iter())
        .enumerate()
        .map(|(t, (&[i, j, k], &area))| {
            if !(area > 0.0) {
                return Err(Error::DegenerateReferenceFace { face: t });
            }
            let g = FaceGeometry::new(f[i], f[j], f[k], area);
            if !(g.image_area >= DEGENERATE_AREA) {
                return Err(Error::DegenerateImageFace {
                    face: t,
                    area: g.image_area,
                });
            }
            Ok(g)
        })
        .collect()
}

/// L_S from precomputed face geometry. Off-diagonals collect −ω from the
/// two faces of each edge; the diagonal closes each row to zero.
pub fn laplacian_from_geometry(surface: &SimplicialSurface, geometry: &[FaceGeometry]) -> CsrMatrix {
    let weights: Vec<[f64; 6]> = geometry
        .iter()
        .map(|g| {
            let [wij, wjk, wki] = g.stretch_weights();
            [wij, wij, wjk, wjk, wki, wki]
        })
        .collect();
    surface.pattern().assemble(&weights)
}

pub fn assemble_laplacian(surface: &SimplicialSurface, f: &[Vec3]) -> Result<CsrMatrix> {
    Ok(laplacian_from_geometry(surface, &face_geometry(surface, f)?))
}

/// Energies of a mapping against the reference areas of `surface`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// E_S.
    pub stretch: f64,
    /// A(f).
    pub image_area: f64,
    /// E_A = E_S − A(f).
    pub authalic: f64,
    /// E = |M| E_S / A(f).
    pub normalized: f64,
    /// |M|.
    pub reference_area: f64,
}

impl EnergyReport {
    fn new(stretch: f64, image_area: f64, reference_area: f64) -> Result<Self> {
        if !(image_area > 0.0) {
            return Err(Error::ZeroImageArea);
        }
        Ok(Self {
            stretch,
            image_area,
            authalic: stretch - image_area,
            normalized: reference_area * stretch / image_area,
            reference_area,
        })
    }
}

/// Energies with E_S = ½ Σ_s (fˢ)ᵀ L_S(f) fˢ.
pub fn stretch_energy(surface: &SimplicialSurface, f: &[Vec3]) -> Result<EnergyReport> {
    let geometry = face_geometry(surface, f)?;
    let l = laplacian_from_geometry(surface, &geometry);
    let stretch = 0.5 * quadratic_form(&l, f);
    let area: f64 = geometry.iter().map(|g| g.image_area).sum();
    EnergyReport::new(stretch, area, surface.total_area())
}

/// Energies with E_S = Σ_τ |f(τ)|²/|τ|. Equal to [`stretch_energy`] up to
/// roundoff and cheaper, since no matrix is assembled.
pub fn evaluate_energy(surface: &SimplicialSurface, f: &[Vec3]) -> Result<EnergyReport> {
    let geometry = face_geometry(surface, f)?;
    let stretch: f64 = geometry.iter().map(FaceGeometry::stretch).sum();
    let area: f64 = geometry.iter().map(|g| g.image_area).sum();
    EnergyReport::new(stretch, area, surface.total_area())
}

/// Σ_s (fˢ)ᵀ L fˢ.
pub fn quadratic_form(l: &CsrMatrix, f: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for s in 0..3 {
        let col: Vec<f64> = f.iter().map(|r| r[s]).collect();
        let lx = l.mul_vec(&col);
        total += col.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>();
    }
    total
}

/// Row-wise L·f for an n×3 array.
pub fn laplacian_times(l: &CsrMatrix, f: &[Vec3]) -> Vec<Vec3> {
    (0..l.nrows())
        .map(|i| l.row(i).fold(Vec3::zeros(), |acc, (j, v)| acc + f[j] * v))
        .collect()
}

/// A(f) = Σ_τ ½√(A₁₂² + A₁₃² + A₂₃²).
pub fn image_area(surface: &SimplicialSurface, f: &[Vec3]) -> Result<f64> {
    Ok(face_geometry(surface, f)?.iter().map(|g| g.image_area).sum())
}

fn area_gradient_from_geometry(surface: &SimplicialSurface, geometry: &[FaceGeometry]) -> Vec<Vec3> {
    let mut grad = vec![Vec3::zeros(); surface.num_vertices()];
    for (face, g) in surface.faces().iter().zip(geometry) {
        let p = g.area_partials();
        for c in 0..3 {
            grad[face[c]] += p[c];
        }
    }
    grad
}

/// ∇A(f) accumulated from the nine per-face partial derivatives.
pub fn image_area_gradient(surface: &SimplicialSurface, f: &[Vec3]) -> Result<Vec<Vec3>> {
    Ok(area_gradient_from_geometry(surface, &face_geometry(surface, f)?))
}

/// ∇A(f) = Σ_τ (|τ|/A(f|τ)) L_S(f|τ) f|τ, with the per-face Laplacian
/// written in terms of edge dot products.
pub fn image_area_gradient_via_laplacian(surface: &SimplicialSurface, f: &[Vec3]) -> Result<Vec<Vec3>> {
    let geometry = face_geometry(surface, f)?;
    let mut grad = vec![Vec3::zeros(); surface.num_vertices()];
    for (&[i, j, k], g) in surface.faces().iter().zip(&geometry) {
        let l = face_laplacian(f[i], f[j], f[k], g.reference_area);
        let scale = g.reference_area / g.image_area;
        let local = [f[i], f[j], f[k]];
        for (a, &v) in [i, j, k].iter().enumerate() {
            let mut acc = Vec3::zeros();
            for b in 0..3 {
                acc += local[b] * l[(a, b)];
            }
            grad[v] += acc * scale;
        }
    }
    Ok(grad)
}

/// Per-face L_S(f|τ) in edge-dot-product form.
pub fn face_laplacian(fi: Vec3, fj: Vec3, fk: Vec3, reference_area: f64) -> SMatrix<f64, 3, 3> {
    let dk = (fi - fk).dot(&(fj - fk));
    let dj = (fi - fj).dot(&(fk - fj));
    let di = (fj - fi).dot(&(fk - fi));
    let s = 1.0 / (4.0 * reference_area);
    SMatrix::<f64, 3, 3>::new(
        dk + dj,
        -dk,
        -dj,
        -dk,
        dk + di,
        -di,
        -dj,
        -di,
        dj + di,
    ) * s
}

/// ∇E_S = 2 L_S(f) f, row-wise.
pub fn stretch_gradient(surface: &SimplicialSurface, f: &[Vec3]) -> Result<Vec<Vec3>> {
    let l = assemble_laplacian(surface, f)?;
    Ok(laplacian_times(&l, f).into_iter().map(|v| v * 2.0).collect())
}

/// Energies and the Euclidean gradient of E in one assembly pass:
/// ∇_{fˢ}E = (2|M|/A) L_S fˢ − (|M| E_S / A²) ∇_{fˢ}A.
pub fn energy_and_gradient(surface: &SimplicialSurface, f: &[Vec3]) -> Result<(EnergyReport, Vec<Vec3>)> {
    let geometry = face_geometry(surface, f)?;
    let stretch: f64 = geometry.iter().map(FaceGeometry::stretch).sum();
    let area: f64 = geometry.iter().map(|g| g.image_area).sum();
    let report = EnergyReport::new(stretch, area, surface.total_area())?;
    let l = laplacian_from_geometry(surface, &geometry);
    let lf = laplacian_times(&l, f);
    let grad_a = area_gradient_from_geometry(surface, &geometry);
    let m = surface.total_area();
    let c1 = 2.0 * m / area;
    let c2 = m * stretch / (area * area);
    let grad = lf.iter().zip(&grad_a).map(|(a, b)| a * c1 - b * c2).collect();
    Ok((report, grad))
}

pub fn euclidean_gradient(surface: &SimplicialSurface, f: &[Vec3]) -> Result<Vec<Vec3>> {
    Ok(energy_and_gradient(surface, f)?.1)
}

/// 9×9 Hessian of one face's stretch energy. Rows and columns are ordered
/// coordinate-major: index 3·s + c for coordinate s and corner c ∈ {i, j, k}.
#[derive(Debug, Clone)]
pub struct FaceHessian {
    pub face: usize,
    pub matrix: SMatrix<f64, 9, 9>,
    /// max |H − Hᵀ| of the closed form as evaluated.
    pub asymmetry: f64,
}

pub fn face_hessian_local(fi: Vec3, fj: Vec3, fk: Vec3, reference_area: f64) -> SMatrix<f64, 9, 9> {
    let h: [nalgebra::Vector3<f64>; 3] = std::array::from_fn(|l| {
        nalgebra::Vector3::new(fj[l] - fk[l], fk[l] - fi[l], fi[l] - fj[l])
    });
    let outer = |a: usize, b: usize| h[a] * h[b].transpose();
    let mut m = SMatrix::<f64, 9, 9>::zeros();
    for s in 0..3 {
        for t in 0..3 {
            let block = if s == t {
                let (p, q) = match s {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                outer(p, p) + outer(q, q)
            } else {
                outer(s, t) - outer(t, s) * 2.0
            };
            m.fixed_view_mut::<3, 3>(3 * s, 3 * t).copy_from(&block);
        }
    }
    m / (2.0 * reference_area)
}

pub fn face_hessian(surface: &SimplicialSurface, f: &[Vec3], face: usize) -> Result<FaceHessian> {
    check_len(surface, f)?;
    let [i, j, k] = *surface.faces().get(face).ok_or_else(|| {
        Error::InvalidArgument(format!("face {face} out of range"))
    })?;
    let area = surface.face_areas()[face];
    if !(area > 0.0) {
        return Err(Error::DegenerateReferenceFace { face });
    }
    let matrix = face_hessian_local(f[i], f[j], f[k], area);
    let asymmetry = (matrix - matrix.transpose()).abs().max();
    Ok(FaceHessian {
        face,
        matrix,
        asymmetry,
    })
}

/// Global 3n×3n Hessian of E_S; entry (s·n + v, t·n + w).
pub fn assemble_global_hessian(surface: &SimplicialSurface, f: &[Vec3]) -> Result<CsrMatrix> {
    check_len(surface, f)?;
    let n = surface.num_vertices();
    let blocks: Vec<SMatrix<f64, 9, 9>> = (0..surface.num_faces())
        .into_par_iter()
        .map(|t| face_hessian(surface, f, t).map(|h| h.matrix))
        .collect::<Result<_>>()?;
    let mut triplets = Vec::with_capacity(81 * blocks.len());
    for (face, block) in surface.faces().iter().zip(&blocks) {
        for a in 0..9 {
            let row = (a / 3) * n + face[a % 3];
            for b in 0..9 {
                let col = (b / 3) * n + face[b % 3];
                triplets.push((row, col, block[(a, b)]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(3 * n, 3 * n, &triplets))
}
