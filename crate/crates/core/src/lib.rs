//! Desk-scale cardiac hemodynamics toolkit.
//!
//! The crate couples a stabilized P1-P1 finite-element solver for the
//! incompressible Navier-Stokes equations in ALE form — with resistive
//! immersed surfaces standing in for the cardiac valves and prescribed wall
//! motion — to an open lumped-parameter circulation advanced by a first-order
//! IMEX scheme. A segregated explicit loop exchanges mean pressures and
//! flowrates between the two models once per time step. Postprocessing
//! extracts hemodynamic biomarkers, normalizes them against physiological
//! reference ranges and computes wall shear stress maps.
//!
//! Numeric kernels (meshes, sparse operators, Krylov solvers, quadrature,
//! splines, distance queries) are generic over the scalar type via
//! [`scalar::Real`]; the simulation layers use the `f64` aliases below.

pub mod circulation;
pub mod coupling;
pub mod error;
pub mod femops;
pub mod geometry;
pub mod field;
pub mod mesh;
pub mod motion;
pub mod nsale;
pub mod parallel;
pub mod postproc;
pub mod quadrature;
pub mod riis;
pub mod scalar;
pub mod solver;
pub mod sparse;
pub mod spline;
pub mod vtk;

pub use error::{Error, Result};

/// Concrete `f64` aliases used by the simulation layers.
pub type Mesh = mesh::Mesh<f64>;
pub type Field = field::Field<f64>;
pub type SparseOperator = sparse::CsrMatrix<f64>;
pub type CooBuilder = sparse::CooBuilder<f64>;
pub type SmoothingSpline = spline::SmoothingSpline<f64>;

/// mmHg to Pa conversion used at the 3D-0D boundary.
pub const MMHG_TO_PA: f64 = 133.322;
/// m^3/s to mL/s conversion used at the 3D-0D boundary.
pub const M3S_TO_MLS: f64 = 1e6;
