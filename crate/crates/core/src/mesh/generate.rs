use std::collections::HashMap;

use super::SimplicialSurface;
use crate::Vec3;

const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

fn unit_icosphere(subdivisions: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces = ICOSAHEDRON_FACES.to_vec();

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Subdivided icosahedron projected to the unit sphere, then scaled per axis
/// by `radii`. Faces are oriented outward.
pub fn make_icosphere(subdivisions: usize, radii: [f64; 3]) -> SimplicialSurface {
    let (vertices, faces) = unit_icosphere(subdivisions);
    let vertices = vertices
        .into_iter()
        .map(|v| Vec3::new(v.x * radii[0], v.y * radii[1], v.z * radii[2]))
        .collect();
    SimplicialSurface::new(vertices, faces).expect("icosphere is a closed genus-zero mesh")
}

/// Icosphere with a smooth radial bump field
/// `r = 1 + amplitude * sin(lobes * x) * sin(lobes * y) * sin(lobes * z)`
/// plus a stretch along the z axis, which gives FPI something nontrivial
/// to converge on.
pub fn make_bumpy_sphere(subdivisions: usize, amplitude: f64, lobes: f64) -> SimplicialSurface {
    let (vertices, faces) = unit_icosphere(subdivisions);
    let vertices = vertices
        .into_iter()
        .map(|v| {
            let r = 1.0 + amplitude * (lobes * v.x).sin() * (lobes * v.y).sin() * (lobes * v.z).sin();
            let p = v * r;
            Vec3::new(p.x, p.y, 1.5 * p.z)
        })
        .collect();
    SimplicialSurface::new(vertices, faces).expect("bumpy sphere is a closed genus-zero mesh")
}
