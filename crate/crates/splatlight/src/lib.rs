//! Relightable scenes of 3D Gaussian primitives.
//!
//! The crate covers the full loop: building articulated toy scenes whose
//! Gaussians ride on a skinned mesh, shading them with zonal-harmonic diffuse
//! transport and deferred spherical-Gaussian specular lobes, attenuating by a
//! ray-traced normalized-irradiance shadow map, and recovering the appearance
//! parameters by gradient descent against rendered targets.

pub mod error;
pub mod fit;
pub mod harmonics;
pub mod img;
pub mod irradiance;
pub mod lights;
pub mod pipeline;
pub mod scene;
pub mod scene_io;
pub mod validate;
pub mod shading;
pub mod splat;

pub use error::{Error, Result};
