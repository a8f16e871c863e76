//! Light-stage rigs and lat-long environment maps.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;

/// One stage light: a position on the capture dome and an RGB intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub position: Vector3<f64>,
    pub intensity: [f64; 3],
}

/// A set of point lights with an activation mask, mirroring a light-stage
/// dome where a frame lights only a subset of the LEDs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub dome_radius: f64,
    pub lights: Vec<PointLight>,
    /// Per-light activation; must match `lights` in length.
    pub active: Vec<bool>,
}

impl LightRig {
    /// Evenly distributed dome: `count` lights on a Fibonacci sphere of the
    /// given radius, all active with equal intensity.
    pub fn dome(count: usize, radius: f64, intensity: [f64; 3]) -> Self {
        let lights = (0..count)
            .map(|i| PointLight {
                position: radius * fibonacci_dir(i, count),
                intensity,
            })
            .collect();
        LightRig { dome_radius: radius, lights, active: vec![true; count] }
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn active_lights(&self) -> impl Iterator<Item = (usize, &PointLight)> {
        self.lights
            .iter()
            .enumerate()
            .filter(|(i, _)| self.active.get(*i).copied().unwrap_or(true))
    }

    pub fn active_count(&self) -> usize {
        self.active_lights().count()
    }

    /// Copy of the rig with only the listed light indices active.
    pub fn with_active_subset(&self, indices: &[usize]) -> Self {
        let mut rig = self.clone();
        rig.active = vec![false; self.lights.len()];
        for &i in indices {
            rig.active[i] = true;
        }
        rig
    }

    /// Activates a random subset of `min..=max` lights, as in partially-lit
    /// capture frames. Deterministic for a given RNG state.
    pub fn random_subset<R: Rng>(&self, rng: &mut R, min: usize, max: usize) -> Self {
        let n = rng.gen_range(min..=max).min(self.lights.len());
        // Partial Fisher-Yates over the index list.
        let mut idx: Vec<usize> = (0..self.lights.len()).collect();
        for i in 0..n {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(n);
        self.with_active_subset(&idx)
    }

    /// Scalar importance of a light (mean of the RGB intensity), used for
    /// sampling weights and irradiance normalization.
    pub fn scalar_intensity(light: &PointLight) -> f64 {
        (light.intensity[0] + light.intensity[1] + light.intensity[2]) / 3.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.active.len() != self.lights.len() {
            return Err(Error::malformed(format!(
                "light rig has {} lights but {} activation flags",
                self.lights.len(),
                self.active.len()
            )));
        }
        for (i, l) in self.lights.iter().enumerate() {
            if !(l.position.norm() > 0.0) {
                return Err(Error::malformed(format!("light {i} sits at the origin")));
            }
            if l.intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::malformed(format!("light {i} has invalid intensity")));
            }
        }
        Ok(())
    }
}

/// Golden-angle spiral point on the unit sphere.
pub fn fibonacci_dir(i: usize, n: usize) -> Vector3<f64> {
    let golden_angle = PI * (3.0 - 5.0f64.sqrt());
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden_angle * i as f64;
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Lat-long radiance map. Row 0 is the +z pole (polar angle 0); azimuth runs
/// counter-clockwise from +x. Texels store linear radiance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMap {
    width: usize,
    height: usize,
    texels: Vec<[f64; 3]>,
}

impl EnvironmentMap {
    pub fn constant(width: usize, height: usize, value: [f64; 3]) -> Self {
        EnvironmentMap { width, height, texels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texel(&self, x: usize, y: usize) -> [f64; 3] {
        self.texels[y * self.width + x]
    }

    pub fn set_texel(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.texels[y * self.width + x] = v;
    }

    /// Unit direction through the texel center.
    pub fn pixel_direction(&self, x: usize, y: usize) -> Vector3<f64> {
        let theta = PI * (y as f64 + 0.5) / self.height as f64;
        let phi = 2.0 * PI * (x as f64 + 0.5) / self.width as f64;
        let st = theta.sin();
        Vector3::new(st * phi.cos(), st * phi.sin(), theta.cos())
    }

    /// Solid angle of any texel in row `y` (constant along a row).
    pub fn pixel_solid_angle(&self, y: usize) -> f64 {
        let theta = PI * (y as f64 + 0.5) / self.height as f64;
        (2.0 * PI / self.width as f64) * (PI / self.height as f64) * theta.sin()
    }

    /// Mean-of-RGB radiance at a texel.
    pub fn scalar_radiance(&self, x: usize, y: usize) -> f64 {
        let t = self.texel(x, y);
        (t[0] + t[1] + t[2]) / 3.0
    }

    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels() != 3 {
            return Err(Error::malformed(format!(
                "environment map needs 3 channels, got {}",
                img.channels()
            )));
        }
        let mut env = EnvironmentMap::constant(img.width(), img.height(), [0.0; 3]);
        for y in 0..img.height() {
            for x in 0..img.width() {
                env.set_texel(x, y, [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)]);
            }
        }
        Ok(env)
    }

    /// Loads a radiance map: `.pfm` read as linear floats, `.png` decoded
    /// from sRGB to linear.
    pub fn load(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        let img = match ext.as_str() {
            "pfm" => Image::read_pfm(path)?,
            "png" => Image::read_png_srgb(path)?,
            other => {
                return Err(Error::malformed(format!(
                    "unsupported environment map extension {other:?} (use .pfm or .png)"
                )))
            }
        };
        Self::from_image(&img)
    }

    pub fn to_image(&self) -> Image {
        let mut img = Image::new(self.width, self.height, 3);
        for y in 0..self.height {
            for x in 0..self.width {
                let t = self.texel(x, y);
                for c in 0..3 {
                    img.set(x, y, c, t[c]);
                }
            }
        }
        img
    }
}
