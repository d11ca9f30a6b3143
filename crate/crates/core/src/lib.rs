//! Whitney-cube extension of vector fields from (ε, δ) domains, and empirical
//! Friedrichs and Gaffney constants on a gallery of regular and prefractal
//! domains.

pub mod error;
pub mod extension;
pub mod field;
pub mod geometry;
pub mod lab;
pub mod affine;
pub mod partition;
pub mod quad;
pub mod reflection;
pub mod smooth;
pub mod whitney;

pub use error::{Error, Result};
