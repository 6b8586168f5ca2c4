//! Rotation-equivariant geometric scattering on graphs embedded in R^d, and
//! the ESc-GNN model built on top of it.

pub mod cli;
pub mod diffusion_ops;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod linalg;
pub mod nn_model;
pub mod scattering;
pub mod synthetic_data;
pub mod training_bench;
pub mod wavelets;

pub use error::{Error, Result};
