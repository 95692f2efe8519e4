//! Dynamic spectral sparsifiers for geometric kernel graphs, Laplacian
//! sketches built on top of them, and low-dimensional distance estimation.

pub mod error;
pub mod geometry;
pub mod projection;
pub mod quadtree;
pub mod sampling;
pub mod sketches;
pub mod sparsifier;
pub mod ujl;
pub mod wspd;

pub use error::{Error, Result};
