//! Simulation of soft-clamped phononic-crystal membrane resonators.

pub mod bloch;
pub mod container;
pub mod eigen;
pub mod dissipation;
pub mod error;
pub mod fem;
pub mod fom;
pub mod geometry;
pub mod material;
pub mod mesh;
pub mod modal;
pub mod prestress;
pub mod recovery;
pub mod sparse;

pub use error::{Error, Result};
