//! Damped Naghdi shells on triangulated surfaces.
//!
//! The crate discretizes the linear damped shell system
//! `xi_tt + A xi + a(x) xi_t = 0` with clamped boundary, certifies escape
//! vector fields and damping regions, checks the energy and multiplier
//! identities numerically, and synthesizes exact controls by Russell's
//! stabilization-to-control principle.

pub mod control;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod escape;
pub mod forms;
pub mod geometry;
pub mod kinematics;
pub mod mesh;
pub mod sparse;

pub use error::{Error, Result};
pub use geometry::Geometry;
pub use mesh::{SurfaceMesh, Vec3};
