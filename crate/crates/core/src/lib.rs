//! Fitting of spatially varying BRDFs to posed HDR images of known geometry
//! under directional lights, with parametric and purely neural reflectance
//! models, plus audits for positivity, reciprocity and energy conservation.

pub mod angles;
pub mod brdf;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod imageio;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod neural;
pub mod nn;
pub mod parametric;
pub mod render;
pub mod sampling;
pub mod scalar;
pub mod tonemap;
pub mod train;

pub use error::{Error, Result};
pub use math::{Rgb, Vec3};
