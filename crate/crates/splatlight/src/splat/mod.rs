//! Differentiable-friendly Gaussian splatting: camera model, tiled
//! compositor with a brute-force reference, and the deferred G-buffer.

pub mod camera;
pub mod gbuffer;
pub mod raster;

pub use camera::Camera;
pub use gbuffer::{render_gbuffer, GBuffer, SplatAttributes};
pub use raster::{
    composite, composite_bruteforce, project_gaussian, sort_splats, CompositeOptions,
    CompositeOutput, Hit, Splat2D, DEFAULT_DILATION, DEFAULT_EARLY_EXIT,
    MAHALANOBIS_CUTOFF, TILE,
};
