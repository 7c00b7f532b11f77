//! Lifting of multi-view 2D instance masks into per-object 3D voxel mask
//! fields, and phenotypic trait extraction from the resulting labeled point
//! clouds.

pub mod error;
pub mod frames;
pub mod geometry;
pub mod io;
pub mod lifting;
pub mod meshing;
pub mod metrics;
pub mod prompting;
pub mod raster;
pub mod synth;
pub mod traits;

pub use error::{Error, Result};
