//! Error type shared across the crate.

/// Errors surfaced by scene construction, rendering, and fitting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("direction is not unit length (|v| = {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("harmonic order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("coefficient layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("frame is not a right-handed orthonormal basis (residual {residual:.3e})")]
    InvalidFrame { residual: f64 },

    #[error("{count} degenerate texels (first ids: {first:?})")]
    DegenerateTexels { count: usize, first: Vec<u32> },

    #[error("specular normal vanishes after offset (|n + dn| = {norm:.3e})")]
    DegenerateNormal { norm: f64 },

    #[error("roughness {value} outside (0, {max}]")]
    InvalidRoughness { value: f64, max: f64 },

    #[error("irradiance normalization undefined: total light intensity is zero")]
    UndefinedNormalization,

    #[error("splats are not sorted front-to-back by depth")]
    UnsortedSplats,

    #[error("gradients requested for frozen parameter class {class:?}")]
    FrozenParameter { class: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for input validation failures.
    pub fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }
}
