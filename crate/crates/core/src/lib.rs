//! Droplet and cell image analysis: brightfield droplet sizing, dye
//! unmixing, frame registration, fluorescence cell scoring, synthetic scene
//! rendering and a batch/stream pipeline tying them together.

pub mod brightfield;
pub mod error;
pub mod filters;
pub mod fluor;
pub mod raster;
pub mod region;
pub mod registration;
pub mod stainsep;
pub mod synth;
#[cfg(feature = "pipeline")]
pub mod pipeline;

pub use error::{Error, Result};
pub use raster::{BinaryMask, RasterImage};
pub use region::{circularity, label_components, trace_contour, BoundingBox, Connectivity, Contour, Region};
