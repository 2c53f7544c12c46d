//! Spherical area-preserving parameterization of genus-zero triangle meshes.
//!
//! The normalized stretch energy is minimized by Riemannian gradient descent
//! on the product of unit spheres, warm-started by a fixed-point iteration
//! and followed by a mean-value fold correction. Landmark-aligned
//! registration of two surfaces is built on the same machinery.

pub mod bijectivity;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod fpi;
pub mod linesearch;
pub mod linsolve;
pub mod mesh;
pub mod pipeline;
pub mod registration;
pub mod rgd;
pub mod sparse;
pub mod sphere;

pub use error::{Error, MeshError, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
