//! Numerical tools for divergence-form elliptic operators on the upper
//! half-space: Carleson norms over dyadic tents, a logarithmic mollifier
//! that splits a coefficient field into a smooth part plus a Carleson
//! perturbation, the flattening change of variables, Q1 strip solvers and
//! the boundary functionals used to measure solvability.

pub mod carleson;
pub mod chgvar;
pub mod codim;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod functionals;
pub mod matrix;
pub mod mesh;
pub mod probes;
pub mod quadrature;
pub mod report;
pub mod smoothing;

mod par;

pub use error::{Error, Result};
pub use field::{MatrixField, Point, ScalarField};
pub use matrix::Mat;
pub use mesh::HalfSpaceMesh;
