//! Hybrid High-Order discretizations of finite-deformation hyperelasticity on
//! simplicial meshes, in stabilized (sHHO) and unstabilized (uHHO) variants.

pub mod assembly;
pub mod basis;
pub mod cases;
pub mod config;
pub mod error;
pub mod hho;
pub mod material;
pub mod mesh;
pub mod postproc;
pub mod quadrature;
pub mod verify;

pub use error::{HhoError, Result};
