//! Fully implicit interior-penalty DG simulator for immiscible compressible
//! two-phase flow in porous media, with a bound-preserving flux limiter and a
//! vertex-based slope limiter for the wetting saturation.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the drivers use.

// `!(x > 0)` rejects NaN on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod ad;
pub mod assembly;
pub mod config;
pub mod dg;
pub mod diagnostics;
pub mod error;
pub mod limiters;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod physics;
pub mod scalar;
pub mod solver;
pub mod vtk;

pub use error::{Error, Result};
pub use scalar::{Real, Vec2};

pub type Mesh = mesh::TriMesh<f64>;
pub type Space = dg::DgSpace<f64>;
pub type Field = dg::DgField<f64>;
pub type State = assembly::FlowState<f64>;
pub type Problem = assembly::Problem<f64>;
pub type Fluid = physics::FluidModel<f64>;
pub type Rock = physics::RockModel<f64>;
