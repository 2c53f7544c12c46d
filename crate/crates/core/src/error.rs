use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or validating a triangle mesh.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-triangle face at line {line} ({count} vertices)")]
    NonTriangleFace { line: usize, count: usize },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} repeats a vertex index")]
    DegenerateFace { face: usize },
    #[error("non-manifold edge ({0}, {1}) with {2} incident faces")]
    NonManifoldEdge(usize, usize, usize),
    #[error("open surface: boundary edge ({0}, {1})")]
    OpenSurface(usize, usize),
    #[error("surface is not genus zero (Euler characteristic {euler})")]
    NotGenusZero { euler: i64 },
    #[error("surface has zero total area")]
    ZeroArea,
    #[error("unknown mesh format for {0}")]
    UnknownFormat(PathBuf),
    #[error("landmark {line}: {message}")]
    Landmark { line: usize, message: String },
}

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("shape mismatch: expected {expected} rows, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("row {row} cannot be normalized (norm {norm:e})")]
    ZeroRow { row: usize, norm: f64 },
    #[error("image of face {face} is degenerate (area {area:e})")]
    DegenerateImageFace { face: usize, area: f64 },
    #[error("face {face} has zero reference area")]
    DegenerateReferenceFace { face: usize },
    #[error("total image area is zero")]
    ZeroImageArea,
    #[error("coincident planar points {0} and {1}")]
    CoincidentPoints(usize, usize),
    #[error("planar image collapsed (median modulus {0:e})")]
    DegeneratePlane(f64),
    #[error("angle at vertex {vertex} of face {face} is degenerate")]
    DegenerateAngle { face: usize, vertex: usize },
    #[error("singular or ill-conditioned system (size {size}, condition estimate {condition:e})")]
    SingularSystem { size: usize, condition: f64 },
    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("search direction is not a descent direction (slope {0:e})")]
    NotDescent(f64),
    #[error("direction is not tangent at row {row} (inner product {inner:e})")]
    NotTangent { row: usize, inner: f64 },
    #[error("line search exhausted {0} backtracks")]
    LineSearchFailed(usize),
    #[error("empty interior index set")]
    EmptyInterior,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero total displacement between noisy and clean meshes")]
    ZeroDisplacement,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
