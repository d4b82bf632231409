//! dsmreg — memory-bounded registration and fusion of overlapping digital
//! surface models.
//!
//! The pipeline registers every sufficiently overlapping DSM pair with a
//! grid-native ICP whose nearest-neighbor search reads only a small window
//! of the reference raster per query, assembles the pairwise poses into a
//! weighted scene graph, estimates globally consistent rigid poses by
//! motion averaging, and fuses the registered rasters into one seamless
//! DSM.

pub mod error;
pub mod fusion;
pub mod geo;
pub mod graph;
pub mod icp;
pub mod io;
pub mod motion;
pub mod nn;
pub mod raster;
pub mod se3;
pub mod synth;
pub(crate) mod sparse;

pub use error::{Error, Result};
pub use geo::{uv_to_world, world_to_uv, GeoTransform};
pub use raster::{DsmGrid, PixelRect, Window};
pub use se3::RigidTransform;
