//! Fold removal with mean-value weights in the stereographic plane.
//!
//! On a fold-free star the mean-value weights of the current positions
//! reproduce those positions, so the solve only moves vertices whose stars
//! are folded (up to roundoff).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fpi::{solve_interior, HemisphereIndexSets};
use crate::mesh::SimplicialSurface;
use crate::sparse::CsrMatrix;
use crate::sphere::{count_folds, invert_plane, inverse_stereographic, stereographic, PlanarMapping, SphericalMapping};

/// Points closer than this are treated as coincident.
pub const COINCIDENT_TOL: f64 = 1e-14;
/// Angles within this of π make tan(φ/2) blow up.
pub const STRAIGHT_ANGLE_TOL: f64 = 1e-10;

/// tan(φ/2)/‖h_a − h_b‖ with φ the angle at h_a between h_b and h_c.
pub fn mean_value_weight(ha: Complex64, hb: Complex64, hc: Complex64) -> Option<f64> {
    let u = hb - ha;
    let v = hc - ha;
    let (nu, nv) = (u.norm(), v.norm());
    let cross = (u.re * v.im - u.im * v.re).abs();
    let dot = u.re * v.re + u.im * v.im;
    let phi = cross.atan2(dot);
    if (phi - std::f64::consts::PI).abs() < STRAIGHT_ANGLE_TOL {
        return None;
    }
    // tan(φ/2) = sin φ / (1 + cos φ), free of cancellation for φ < π
    Some(cross / (nu * nv + dot) / nu)
}

/// L_M(h), restricted to the rows flagged in `rows` (all rows when `None`).
/// Rows outside the selection are left empty.
fn assemble_rows(surface: &SimplicialSurface, h: &PlanarMapping, rows: Option<&[bool]>) -> Result<CsrMatrix> {
    let n = surface.num_vertices();
    if h.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: h.len() });
    }
    let mut triplets = Vec::with_capacity(6 * surface.num_faces() + n);
    let mut diag = vec![0.0; n];
    for (t, face) in surface.faces().iter().enumerate() {
        for r in 0..3 {
            let a = face[r];
            if rows.is_some_and(|sel| !sel[a]) {
                continue;
            }
            let pts: Option<Vec<Complex64>> = face.iter().map(|&v| h.values[v].finite()).collect();
            let pts = pts.ok_or_else(|| Error::InvalidArgument(format!("face {t} has a point at infinity")))?;
            let (pa, pb, pc) = (pts[r], pts[(r + 1) % 3], pts[(r + 2) % 3]);
            let (b, c) = (face[(r + 1) % 3], face[(r + 2) % 3]);
            for (other, po, third) in [(b, pb, pc), (c, pc, pb)] {
                if (po - pa).norm() <= COINCIDENT_TOL {
                    return Err(Error::CoincidentPoints(a, other));
                }
                let w = mean_value_weight(pa, po, third).ok_or(Error::DegenerateAngle { face: t, vertex: a })?;
                triplets.push((a, other, -w));
                diag[a] += w;
            }
        }
    }
    for (i, d) in diag.into_iter().enumerate() {
        if rows.is_none_or(|sel| sel[i]) {
            triplets.push((i, i, d));
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Mean-value Laplacian: [L_M]_ij = −Σ ω over the faces containing edge
/// (i, j), with ω taken at h_i, and the diagonal closing each row to zero.
pub fn assemble_mean_value(surface: &SimplicialSurface, h: &PlanarMapping) -> Result<CsrMatrix> {
    assemble_rows(surface, h, None)
}

/// One solve [L_M]_II h̃_I = −[L_M]_IB h_B on the vertices with |h_i| < r.
/// Returns the new plane and the index sets used.
pub fn unfold_pass(
    surface: &SimplicialSurface,
    h: &PlanarMapping,
    radius: f64,
) -> Result<(PlanarMapping, HemisphereIndexSets)> {
    let sets = HemisphereIndexSets::for_surface(surface, h, radius)?;
    let mut rows = vec![false; h.len()];
    for &i in &sets.interior {
        rows[i] = true;
    }
    let l = assemble_rows(surface, h, Some(&rows))?;
    let out = solve_interior(&l, h, &sets)?;
    Ok((out, sets))
}

#[derive(Debug, Clone)]
pub struct BijectivityResult {
    pub f: SphericalMapping,
    pub folds_before: usize,
    pub folds_after: usize,
    pub sweeps: usize,
    /// Whether every pass left its boundary rows bit-for-bit unchanged.
    pub boundary_fixed: bool,
}

pub const MAX_SWEEPS: usize = 3;

/// Southern pass on the stereographic plane, inversion, northern pass,
/// inversion back and lift; repeated while folds remain, at most
/// [`MAX_SWEEPS`] times. A sweep that adds folds is discarded.
pub fn correct_bijectivity(surface: &SimplicialSurface, f: &SphericalMapping, radius: f64) -> Result<BijectivityResult> {
    if f.len() != surface.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: surface.num_vertices(),
            got: f.len(),
        });
    }
    if !(radius > 1.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} must exceed 1")));
    }
    let folds_before = count_folds(surface, f);
    let mut best = (f.clone(), folds_before);
    let mut current = f.clone();
    let mut sweeps = 0;
    let mut boundary_fixed = true;
    let mut pass = |h: PlanarMapping| -> Result<PlanarMapping> {
        let (out, sets) = unfold_pass(surface, &h, radius)?;
        boundary_fixed &= sets.boundary.iter().all(|&b| out.values[b] == h.values[b]);
        Ok(out)
    };
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let h = pass(stereographic(&current))?;
        let h = pass(invert_plane(&h))?;
        current = inverse_stereographic(&invert_plane(&h));
        let folds = count_folds(surface, &current);
        if folds <= best.1 {
            best = (current.clone(), folds);
        }
        if folds == 0 {
            break;
        }
    }
    Ok(BijectivityResult {
        f: best.0,
        folds_before,
        folds_after: best.1,
        sweeps,
        boundary_fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;
    use crate::sphere::{project_to_manifold, PlanarPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn equilateral_weight() {
        let h = 3f64.sqrt() / 2.0;
        let w = mean_value_weight(c(0.0, 0.0), c(1.0, 0.0), c(0.5, h)).unwrap();
        assert!((w - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(mean_value_weight(c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)).is_none());
    }

    fn planar_sphere(seed: u64) -> (SimplicialSurface, PlanarMapping) {
        // a sphere rotated so that no vertex sits at the north pole
        let s = make_icosphere(1, [1.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rot = nalgebra::Rotation3::from_euler_angles(rng.random(), rng.random(), rng.random());
        let f = project_to_manifold(&s.vertices().iter().map(|v| rot * v).collect::<Vec<_>>()).unwrap();
        (s, stereographic(&f))
    }

    fn dense_oracle(surface: &SimplicialSurface, h: &PlanarMapping) -> nalgebra::DMatrix<f64> {
        let n = surface.num_vertices();
        let p: Vec<Complex64> = h.values.iter().map(|x| x.finite().unwrap()).collect();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for face in surface.faces() {
                    if !(face.contains(&i) && face.contains(&j)) {
                        continue;
                    }
                    let k = *face.iter().find(|&&v| v != i && v != j).unwrap();
                    let (u, v) = (p[j] - p[i], p[k] - p[i]);
                    let cosang = (u.re * v.re + u.im * v.im) / (u.norm() * v.norm());
                    let phi = cosang.clamp(-1.0, 1.0).acos();
                    m[(i, j)] -= (phi / 2.0).tan() / u.norm();
                }
            }
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            m[(i, i)] = -off;
        }
        m
    }

    #[test]
    fn matches_dense_assembly_and_rows_sum_to_zero() {
        let (s, h) = planar_sphere(4);
        let l = assemble_mean_value(&s, &h).unwrap();
        let d = dense_oracle(&s, &h);
        assert!((l.to_dense() - &d).amax() < 1e-10 * d.amax());
        assert!(l.row_sums().iter().all(|r| r.abs() < 1e-10));
        // fold-free stars give positive weights
        for i in 0..s.num_vertices() {
            assert!(l.row(i).all(|(j, v)| j == i || v <= 0.0));
        }
    }

    #[test]
    fn reproduces_fold_free_positions() {
        // stars around the point at infinity are not planar polygons, so
        // only bounded stars are checked
        let (s, h) = planar_sphere(9);
        let l = assemble_mean_value(&s, &h).unwrap();
        let bounded: Vec<bool> = (0..s.num_vertices())
            .map(|i| {
                s.faces()
                    .iter()
                    .filter(|f| f.contains(&i))
                    .all(|f| f.iter().all(|&v| h.values[v].modulus() < 3.0))
            })
            .collect();
        assert!(bounded.iter().filter(|&&b| b).count() > s.num_vertices() / 2);
        for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
            let x: Vec<f64> = h.values.iter().map(|p| part(p.finite().unwrap())).collect();
            let y = l.mul_vec(&x);
            for i in (0..y.len()).filter(|&i| bounded[i]) {
                assert!(y[i].abs() < 1e-10 * l.get(i, i), "row {i}: {}", y[i]);
            }
        }
    }

    #[test]
    fn coincident_and_infinite_points_rejected() {
        let (s, mut h) = planar_sphere(2);
        let [a, b, _] = s.faces()[0];
        h.values[b] = h.values[a];
        assert!(matches!(assemble_mean_value(&s, &h), Err(Error::CoincidentPoints(..))));
        h.values[b] = PlanarPoint::Infinity;
        assert!(assemble_mean_value(&s, &h).is_err());
    }

    #[test]
    fn fold_free_input_is_kept() {
        let s = make_icosphere(2, [1.0; 3]);
        let f = project_to_manifold(s.vertices()).unwrap();
        let r = correct_bijectivity(&s, &f, 1.2).unwrap();
        assert_eq!((r.folds_before, r.folds_after), (0, 0));
        let dev = f.rows().iter().zip(r.f.rows()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn single_reflected_vertex_is_unfolded() {
        let s = make_icosphere(2, [1.0; 3]);
        let mut rows = project_to_manifold(s.vertices()).unwrap().into_rows();
        let v = 17;
        let nbrs: Vec<usize> = s
            .edges()
            .iter()
            .filter_map(|&[a, b]| if a == v { Some(b) } else if b == v { Some(a) } else { None })
            .collect();
        // reflecting through a neighbor pushes the vertex out of its ring
        rows[v] = (2.0 * rows[nbrs[0]] - rows[v]).normalize();
        let f = SphericalMapping::new(rows).unwrap();
        let r = correct_bijectivity(&s, &f, 1.2).unwrap();
        assert!(r.folds_before >= 1);
        assert_eq!(r.folds_after, 0);
        assert!(r.boundary_fixed);
        assert!(r.f.max_unit_deviation() < 1e-12);
    }
}
