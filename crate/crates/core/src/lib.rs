//! Analysis of generalized gauge actions on approximately finite-dimensional
//! algebras presented by leveled diagrams with arrow potentials.
//!
//! The crate is organized around a validated [`diagram::DiagramSpec`]:
//!
//! - [`stats`] computes per-vertex path statistics (partition functions,
//!   minimal potentials, minimizer counts) and the associated projective /
//!   stochastic matrix systems by dynamic programming,
//! - [`geodesic`] extracts the tight-arrow subdiagram whose infinite paths
//!   are the potential-minimizing geodesics,
//! - [`algebra`] realizes the finite-level matrix algebras with their
//!   Hamiltonians, Gibbs states and ground/KMS oracles,
//! - [`limits`] iterates the inverse-limit flows parametrizing KMS states,
//! - [`construct`] runs the diagram constructions realizing prescribed
//!   ground/ceiling/KMS structure.

pub mod algebra;
pub mod construct;
pub mod diagram;
pub mod error;
pub mod fixtures;
pub mod geodesic;
pub mod limits;
pub mod matrix;
pub mod potential;
pub mod stats;
pub mod util;

pub use diagram::{ArrowBundle, DiagramSpec, FinitePath, MultiplicityMatrix};
pub use error::{AlgebraError, ConstructError, DiagramError, TieError};
pub use potential::{Potential, TieMode};
