//! Triangle-mesh data model for closed genus-zero surfaces.
//!
//! A [`SimplicialSurface`] owns the vertex positions and shares its topology
//! (faces, edges, and the Laplacian sparsity pattern) through an `Arc`, so
//! re-positioned copies of the same mesh are cheap.

mod generate;
mod io;
mod landmarks;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::MeshError;
use crate::sparse::LaplacianPattern;
use crate::Vec3;

pub use generate::{make_bumpy_sphere, make_icosphere};
pub use io::{load_mesh, parse_obj, parse_off, save_mesh, write_obj, write_off, MeshFormat};
pub use landmarks::{load_landmarks, parse_landmarks, validate_landmarks, LandmarkFilePair};

/// Validation switches applied when building a surface.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Reject surfaces whose Euler characteristic is not 2. When false a
    /// warning is logged instead.
    pub require_genus_zero: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            require_genus_zero: true,
        }
    }
}

#[derive(Debug)]
struct Topology {
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    pattern: LaplacianPattern,
}

/// A closed, oriented triangle mesh.
#[derive(Debug, Clone)]
pub struct SimplicialSurface {
    vertices: Vec<Vec3>,
    face_areas: Vec<f64>,
    total_area: f64,
    topo: Arc<Topology>,
}

impl SimplicialSurface {
    /// Builds a surface and checks that it is a closed genus-zero 2-manifold.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::with_options(vertices, faces, ValidationOptions::default())
    }

    pub fn with_options(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        options: ValidationOptions,
    ) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (t, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: t,
                        index,
                        count: n,
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace { face: t });
            }
        }

        let mut incidence: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for face in &faces {
            for c in 0..3 {
                let (a, b) = (face[c], face[(c + 1) % 3]);
                *incidence.entry([a.min(b), a.max(b)]).or_insert(0) += 1;
            }
        }
        for (&[a, b], &count) in &incidence {
            match count {
                2 => {}
                1 => return Err(MeshError::OpenSurface(a, b)),
                _ => return Err(MeshError::NonManifoldEdge(a, b, count)),
            }
        }
        let edges: Vec<[usize; 2]> = incidence.into_keys().collect();

        let euler = n as i64 - edges.len() as i64 + faces.len() as i64;
        if euler != 2 {
            if options.require_genus_zero {
                return Err(MeshError::NotGenusZero { euler });
            }
            log::warn!("surface Euler characteristic is {euler}, expected 2");
        }

        let face_areas = compute_face_areas(&vertices, &faces);
        let total_area: f64 = face_areas.iter().sum();
        if !(total_area > 0.0) {
            return Err(MeshError::ZeroArea);
        }
        let pattern = LaplacianPattern::new(n, &faces, &edges);
        Ok(Self {
            vertices,
            face_areas,
            total_area,
            topo: Arc::new(Topology {
                faces,
                edges,
                pattern,
            }),
        })
    }

    /// Same topology, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::Parse {
                line: 0,
                message: format!(
                    "expected {} vertices, got {}",
                    self.vertices.len(),
                    vertices.len()
                ),
            });
        }
        let face_areas = compute_face_areas(&vertices, &self.topo.faces);
        let total_area: f64 = face_areas.iter().sum();
        if !(total_area > 0.0) {
            return Err(MeshError::ZeroArea);
        }
        Ok(Self {
            vertices,
            face_areas,
            total_area,
            topo: Arc::clone(&self.topo),
        })
    }

    /// Uniformly rescales the vertices so that the total area equals `area`.
    pub fn scaled_to_area(&self, area: f64) -> Result<Self, MeshError> {
        let s = (area / self.total_area).sqrt();
        self.with_vertices(self.vertices.iter().map(|v| v * s).collect())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.topo.faces.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.topo.faces
    }

    /// Undirected edges as `[min, max]` pairs in lexicographic order.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.topo.edges
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.edges().len() as i64 + self.num_faces() as i64
    }

    pub(crate) fn pattern(&self) -> &LaplacianPattern {
        &self.topo.pattern
    }

    /// Unit face normals following the face orientation.
    pub fn face_normals(&self) -> Vec<Vec3> {
        self.faces()
            .iter()
            .map(|&[i, j, k]| {
                let n = (self.vertices[j] - self.vertices[i]).cross(&(self.vertices[k] - self.vertices[i]));
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::zeros()
                }
            })
            .collect()
    }

    /// Normalized average of the unit normals of the incident faces.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.num_vertices()];
        for (face, normal) in self.faces().iter().zip(self.face_normals()) {
            for &v in face {
                acc[v] += normal;
            }
        }
        for n in &mut acc {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        acc
    }

    /// Displaces every vertex along its vertex normal by a Gaussian amount
    /// with standard deviation `sigma_noise`, drawn from a seeded generator.
    pub fn perturb_vertices(&self, sigma_noise: f64, seed: u64) -> Result<Self, MeshError> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};

        if sigma_noise == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma_noise).map_err(|e| MeshError::Parse {
            line: 0,
            message: format!("invalid noise level {sigma_noise}: {e}"),
        })?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normals = self.vertex_normals();
        let moved = self
            .vertices
            .iter()
            .zip(&normals)
            .map(|(v, n)| v + n * normal.sample(&mut rng))
            .collect();
        self.with_vertices(moved)
    }
}

fn compute_face_areas(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<f64> {
    faces
        .iter()
        .map(|&[i, j, k]| 0.5 * (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i])).norm())
        .collect()
}
