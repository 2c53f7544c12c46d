//! Geometry of the unit sphere and of its n-fold product: tangent
//! projection, retraction, stereographic maps, plane inversion and fold
//! detection.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::SimplicialSurface;
use crate::Vec3;

/// Row norms may deviate from 1 by at most this much.
pub const UNIT_TOL: f64 = 1e-12;
/// Rows shorter than this cannot be normalized.
pub const MIN_ROW_NORM: f64 = 1e-14;

/// Vertex images on the unit sphere, one row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalMapping {
    rows: Vec<Vec3>,
}

impl SphericalMapping {
    /// Wraps rows that are already unit length.
    pub fn new(rows: Vec<Vec3>) -> Result<Self> {
        for (row, r) in rows.iter().enumerate() {
            if (r.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument(format!(
                    "row {row} has norm {} (not unit)",
                    r.norm()
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec3] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec3> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column `s` (0, 1 or 2) as a vector.
    pub fn column(&self, s: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[s]).collect()
    }

    pub fn max_unit_deviation(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max((r.norm() - 1.0).abs()))
    }
}

/// Tangent vectors, one per row of a [`SphericalMapping`].
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    rows: Vec<Vec3>,
}

impl TangentField {
    /// Wraps rows without checking tangency; see [`TangentField::max_normal_component`].
    pub fn from_rows(rows: Vec<Vec3>) -> Self {
        Self { rows }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            rows: vec![Vec3::zeros(); n],
        }
    }

    pub fn rows(&self) -> &[Vec3] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r * alpha).collect(),
        }
    }

    pub fn norm_fro(&self) -> f64 {
        self.rows.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt()
    }

    /// Frobenius inner product with an arbitrary n×3 array.
    pub fn inner(&self, other: &[Vec3]) -> f64 {
        self.rows.iter().zip(other).map(|(a, b)| a.dot(b)).sum()
    }

    /// Largest |f_ℓ · ξ_ℓ|.
    pub fn max_normal_component(&self, f: &SphericalMapping) -> f64 {
        self.rows
            .iter()
            .zip(f.rows())
            .fold(0.0, |m, (x, p)| m.max(x.dot(p).abs()))
    }
}

fn check_rows(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Row-wise (I − f_ℓ f_ℓᵀ) g_ℓ.
pub fn project_tangent(f: &SphericalMapping, g: &[Vec3]) -> Result<TangentField> {
    check_rows(f.len(), g.len())?;
    Ok(TangentField {
        rows: f.rows.iter().zip(g).map(|(p, v)| v - p * p.dot(v)).collect(),
    })
}

/// Row-wise normalization.
pub fn project_to_manifold(g: &[Vec3]) -> Result<SphericalMapping> {
    let rows = g
        .iter()
        .enumerate()
        .map(|(row, v)| {
            let norm = v.norm();
            if !(norm >= MIN_ROW_NORM) || !norm.is_finite() {
                Err(Error::ZeroRow { row, norm })
            } else {
                Ok(v / norm)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SphericalMapping { rows })
}

/// Row ℓ becomes (f_ℓ + ξ_ℓ)/‖f_ℓ + ξ_ℓ‖.
pub fn retract(f: &SphericalMapping, xi: &TangentField) -> Result<SphericalMapping> {
    retract_scaled(f, xi, 1.0)
}

/// Retraction of α·ξ without materializing the scaled field. With α = 0
/// the input is returned unchanged.
pub fn retract_scaled(f: &SphericalMapping, xi: &TangentField, alpha: f64) -> Result<SphericalMapping> {
    check_rows(f.len(), xi.len())?;
    if alpha == 0.0 || xi.rows.iter().all(|r| *r == Vec3::zeros()) {
        return Ok(f.clone());
    }
    let moved: Vec<Vec3> = f.rows.iter().zip(&xi.rows).map(|(p, x)| p + x * alpha).collect();
    project_to_manifold(&moved)
}

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanarPoint {
    Finite(Complex64),
    Infinity,
}

impl PlanarPoint {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            PlanarPoint::Finite(z) => Some(z),
            PlanarPoint::Infinity => None,
        }
    }

    /// Modulus, with the point at infinity at +∞.
    pub fn modulus(self) -> f64 {
        match self {
            PlanarPoint::Finite(z) => z.norm(),
            PlanarPoint::Infinity => f64::INFINITY,
        }
    }
}

/// Images in the extended plane, one per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMapping {
    pub values: Vec<PlanarPoint>,
}

impl PlanarMapping {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn infinity_count(&self) -> usize {
        self.values.iter().filter(|p| **p == PlanarPoint::Infinity).count()
    }
}

/// x/(1−z) + i·y/(1−z); the north pole goes to infinity.
pub fn stereographic(f: &SphericalMapping) -> PlanarMapping {
    PlanarMapping {
        values: f
            .rows
            .iter()
            .map(|p| {
                let d = 1.0 - p.z;
                if d <= 0.0 {
                    PlanarPoint::Infinity
                } else {
                    PlanarPoint::Finite(Complex64::new(p.x / d, p.y / d))
                }
            })
            .collect(),
    }
}

pub fn inverse_stereographic_point(p: PlanarPoint) -> Vec3 {
    match p {
        PlanarPoint::Infinity => Vec3::new(0.0, 0.0, 1.0),
        PlanarPoint::Finite(z) => {
            let r2 = z.norm_sqr();
            if !r2.is_finite() {
                return Vec3::new(0.0, 0.0, 1.0);
            }
            let d = r2 + 1.0;
            let v = Vec3::new(2.0 * z.re / d, 2.0 * z.im / d, (r2 - 1.0) / d);
            // the closed form is unit up to a few ulps; normalize so the
            // manifold tolerance holds regardless of magnitude
            v / v.norm()
        }
    }
}

/// (2u, 2v, u²+v²−1)/(u²+v²+1); infinity goes to the north pole.
pub fn inverse_stereographic(h: &PlanarMapping) -> SphericalMapping {
    SphericalMapping {
        rows: h.values.iter().map(|&p| inverse_stereographic_point(p)).collect(),
    }
}

pub fn invert_point(p: PlanarPoint) -> PlanarPoint {
    match p {
        PlanarPoint::Infinity => PlanarPoint::Finite(Complex64::new(0.0, 0.0)),
        PlanarPoint::Finite(z) => {
            let r2 = z.norm_sqr();
            if r2 == 0.0 {
                PlanarPoint::Infinity
            } else {
                // 1/conj(z) = z/|z|²
                PlanarPoint::Finite(z / r2)
            }
        }
    }
}

/// z ↦ 1/conj(z), swapping 0 and infinity.
pub fn invert_plane(h: &PlanarMapping) -> PlanarMapping {
    PlanarMapping {
        values: h.values.iter().map(|&p| invert_point(p)).collect(),
    }
}

/// Orientation census of the spherical image.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FoldReport {
    /// Faces with det[f_i f_j f_k] < 0.
    pub folds: usize,
    /// Faces with det[f_i f_j f_k] = 0.
    pub degenerate: usize,
    pub folded_faces: Vec<usize>,
}

pub fn fold_report(surface: &SimplicialSurface, f: &SphericalMapping) -> FoldReport {
    let mut report = FoldReport::default();
    let r = f.rows();
    for (t, &[i, j, k]) in surface.faces().iter().enumerate() {
        let det = r[i].dot(&r[j].cross(&r[k]));
        if det < 0.0 {
            report.folds += 1;
            report.folded_faces.push(t);
        } else if det == 0.0 {
            report.degenerate += 1;
        }
    }
    report
}

pub fn count_folds(surface: &SimplicialSurface, f: &SphericalMapping) -> usize {
    fold_report(surface, f).folds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;
    use proptest::prelude::*;

    fn single(p: Vec3) -> SphericalMapping {
        SphericalMapping::new(vec![p]).unwrap()
    }

    #[test]
    fn tangent_projection_examples() {
        let f = single(Vec3::new(0.0, 0.0, 1.0));
        let cases = [
            (Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)),
            (Vec3::new(0.0, 0.0, 5.0), Vec3::zeros()),
            (Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 0.0)),
        ];
        for (g, want) in cases {
            assert_eq!(project_tangent(&f, &[g]).unwrap().rows()[0], want);
        }
        assert!(matches!(
            project_tangent(&f, &[Vec3::zeros(), Vec3::zeros()]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn retraction_examples() {
        let f = single(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(retract(&f, &TangentField::zeros(1)).unwrap(), f);
        let r = retract(&f, &TangentField::from_rows(vec![Vec3::new(0.0, 1.0, 0.0)])).unwrap();
        let s = 0.5_f64.sqrt();
        assert!((r.rows()[0] - Vec3::new(s, s, 0.0)).norm() < 1e-15);
        let back = TangentField::from_rows(vec![Vec3::new(-1.0, 0.0, 0.0)]);
        assert!(matches!(retract(&f, &back), Err(Error::ZeroRow { row: 0, .. })));
    }

    #[test]
    fn manifold_projection_examples() {
        let p = project_to_manifold(&[Vec3::new(0.0, 0.0, 2.0), Vec3::new(3.0, 4.0, 0.0)]).unwrap();
        assert_eq!(p.rows()[0], Vec3::new(0.0, 0.0, 1.0));
        assert!((p.rows()[1] - Vec3::new(0.6, 0.8, 0.0)).norm() < 1e-16);
        assert!(matches!(project_to_manifold(&[Vec3::zeros()]), Err(Error::ZeroRow { .. })));
    }

    #[test]
    fn stereographic_examples() {
        let f = SphericalMapping::new(vec![
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ])
        .unwrap();
        let h = stereographic(&f);
        assert_eq!(h.values[0], PlanarPoint::Finite(Complex64::new(0.0, 0.0)));
        assert_eq!(h.values[1], PlanarPoint::Finite(Complex64::new(1.0, 0.0)));
        assert_eq!(h.values[2], PlanarPoint::Infinity);
        let back = inverse_stereographic(&h);
        assert_eq!(back, f);
    }

    #[test]
    fn inversion_examples() {
        let c = |re, im| PlanarPoint::Finite(Complex64::new(re, im));
        assert_eq!(invert_point(c(2.0, 0.0)), c(0.5, 0.0));
        assert_eq!(invert_point(c(0.0, 1.0)), c(0.0, 1.0));
        assert_eq!(invert_point(c(1.0, 1.0)), c(0.5, 0.5));
        assert_eq!(invert_point(c(0.0, 0.0)), PlanarPoint::Infinity);
        assert_eq!(invert_point(PlanarPoint::Infinity), c(0.0, 0.0));
    }

    #[test]
    fn folds_on_icosphere() {
        let s = make_icosphere(2, [1.0; 3]);
        let f = project_to_manifold(s.vertices()).unwrap();
        assert_eq!(count_folds(&s, &f), 0);

        let mut faces = s.faces().to_vec();
        faces[5].swap(1, 2);
        let flipped = SimplicialSurface::new(s.vertices().to_vec(), faces).unwrap();
        let report = fold_report(&flipped, &f);
        assert_eq!(report.folds, 1);
        assert_eq!(report.folded_faces, vec![5]);
    }

    #[test]
    fn degenerate_face_is_not_a_fold() {
        let s = make_icosphere(0, [1.0; 3]);
        let mut rows = project_to_manifold(s.vertices()).unwrap().into_rows();
        // put the three vertices of face 0 on one great circle through the first two
        let [i, j, k] = s.faces()[0];
        let n = rows[i].cross(&rows[j]).normalize();
        rows[k] = (rows[k] - n * n.dot(&rows[k])).normalize();
        let f = SphericalMapping::new(rows).unwrap();
        let r = f.rows();
        if r[i].dot(&r[j].cross(&r[k])) == 0.0 {
            let report = fold_report(&s, &f);
            assert!(report.degenerate >= 1);
            assert!(!report.folded_faces.contains(&0));
        }
    }

    fn unit_vec() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn projector_idempotent_and_orthogonal(rows in prop::collection::vec((unit_vec(), vec3()), 1..20)) {
            let f = SphericalMapping::new(rows.iter().map(|r| r.0).collect()).unwrap();
            let g: Vec<Vec3> = rows.iter().map(|r| r.1).collect();
            let once = project_tangent(&f, &g).unwrap();
            let twice = project_tangent(&f, once.rows()).unwrap();
            for (a, b) in once.rows().iter().zip(twice.rows()) {
                prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
            }
            prop_assert!(once.max_normal_component(&f) < 1e-10);
        }

        #[test]
        fn retraction_stays_on_sphere(rows in prop::collection::vec((unit_vec(), vec3()), 1..20), alpha in 0.0..3.0f64) {
            let f = SphericalMapping::new(rows.iter().map(|r| r.0).collect()).unwrap();
            let g: Vec<Vec3> = rows.iter().map(|r| r.1).collect();
            let xi = project_tangent(&f, &g).unwrap();
            let r = retract_scaled(&f, &xi, alpha).unwrap();
            prop_assert!(r.max_unit_deviation() <= 1e-12);
        }

        #[test]
        fn stereographic_round_trip(p in unit_vec()) {
            prop_assume!(p.z < 0.99);
            let f = single(p);
            let back = inverse_stereographic(&stereographic(&f));
            prop_assert!((back.rows()[0] - p).norm() <= 1e-12);
        }

        #[test]
        fn inversion_is_involution(re in -1e3..1e3f64, im in -1e3..1e3f64) {
            prop_assume!(re * re + im * im > 1e-6);
            let z = PlanarPoint::Finite(Complex64::new(re, im));
            let w = invert_point(invert_point(z)).finite().unwrap();
            prop_assert!((w - Complex64::new(re, im)).norm() <= 1e-12 * (1.0 + re.hypot(im)));
        }
    }
}
