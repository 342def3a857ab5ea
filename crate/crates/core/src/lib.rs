//! Surface matching by boundary-force optimization on a hyperelastic
//! tetrahedral cage.
//!
//! A fine source surface is embedded in a coarse tet mesh. Each outer
//! iteration finds correspondences to the target, linearizes the elastic
//! equilibrium at the current state, condenses it onto the boundary, and
//! solves a second-order cone program that trades sparse boundary forces
//! against an anisotropic spring pull toward the target.

pub mod beam;
pub mod cli;
pub mod condense;
pub mod config;
pub mod descriptors;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod matcher;
pub mod materials;
pub mod mesh;
pub mod socp;

pub use error::{Error, Result};
