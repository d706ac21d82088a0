//! Numerical verification toolkit for the Weinstein operator
//! `L_a u = u_rr + (a/r) u_r + Δ_y u` on axisymmetric domains.

pub mod config;
pub mod error;
pub mod field;
pub mod gamma;
pub mod geometry;
pub mod grid;
pub mod measure;
pub mod operator;
pub mod params;
pub mod poly;
pub mod rigidity;
pub mod solver;
pub mod sphere;
pub mod sum;

pub use config::{CheckName, RunConfig};
pub use error::{Error, Result};
pub use field::{BoundaryData, ScalarField};
pub use geometry::AxisymDomain;
pub use grid::{Mesh, StaggeredGrid};
pub use params::WeinsteinParams;
pub use poly::PolyField;
pub use rigidity::{run_experiment, ExperimentReport};
pub use solver::{solve, SolveReport};
