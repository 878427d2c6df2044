//! Numerical laboratory for b-contact geometry: decomposed b-forms, Reeb
//! b-vector fields, (b-)symplectic Hamiltonian dynamics, adaptive flows near
//! critical hypersurfaces and an executable orbit taxonomy.

pub mod bforms;
pub mod cli;
pub mod constructions;
pub mod error;
pub mod expr;
pub mod fields;
pub mod flow;
pub mod orbits;
pub mod reeb;
pub mod vecmath;

pub use error::{Error, Result};
