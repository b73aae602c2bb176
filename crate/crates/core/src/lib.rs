//! Image segmentation with the Ambrosio-Tortorelli phase-field functional,
//! solved as a gradient flow on an adaptive moving simplicial mesh.
//!
//! The pipeline alternates two solves per macro time step:
//!
//! 1. a metric tensor is recovered from the current grey-level field and the
//!    mesh is moved by integrating a moving-mesh PDE for the computational
//!    coordinates ([`meshmotion`]), then mapped back through the
//!    mesh correspondence ([`geometry::apply_correspondence`]);
//! 2. the coupled finite-element system for `(u, φ)` ([`fem`]) is
//!    integrated on the linearly moving mesh with a three-stage Radau IIA
//!    solver ([`timeint`]).
//!
//! All numerical code is generic over the scalar type ([`Real`], `f32` or
//! `f64`) and over the spatial dimension `D ∈ {1, 2}`; the aliases below fix
//! the common `f64` instantiations.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix notation.
#![allow(clippy::needless_range_loop)]

pub mod driver;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod imagefield;
pub mod linalg;
pub mod meshmotion;
pub mod metric;
mod scalar;
pub mod timeint;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh1 = geometry::SimplicialMesh<f64, 1>;
pub type Mesh2 = geometry::SimplicialMesh<f64, 2>;
pub type Field1 = imagefield::ImageField<f64, 1>;
pub type Field2 = imagefield::ImageField<f64, 2>;
pub type Metric1 = metric::MetricField<f64, 1>;
pub type Metric2 = metric::MetricField<f64, 2>;
pub type Params = fem::SegParams<f64>;
pub type MotionParams = meshmotion::MeshMotionParams<f64>;
pub type Radau = timeint::RadauConfig<f64>;
