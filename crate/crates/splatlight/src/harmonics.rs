//! Real spherical harmonics up to order 8 and the zonal-lobe transport basis.
//!
//! Conventions: orthonormal real basis with the Condon-Shortley phase folded
//! into the associated Legendre terms, so e.g. Y_{1,1}(+x) = -0.4886.
//! Coefficients are stored band-major under the flat index `l*l + l + m`
//! (m running -l..l), so band l occupies `l*l .. (l+1)*(l+1)`.
//!
//! Diffuse transport lives in a compressed zonal form: three lobes (one per
//! texel frame axis), per-channel coefficients for bands 0..=3 and shared
//! monochromatic coefficients for bands 4..=8. [`transport_from_zh`] expands
//! that form into a full 3-channel order-8 vector by evaluating each lobe's
//! bands at its axis direction.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lights::{EnvironmentMap, LightRig};

/// Highest supported band.
pub const MAX_ORDER: usize = 8;
/// Bands carrying per-channel (colored) zonal coefficients; higher bands up to
/// [`MAX_ORDER`] are monochromatic.
pub const COLORED_ORDER: usize = 3;
/// Unit-length tolerance for direction inputs.
pub const DIR_TOL: f64 = 1e-9;
/// Orthonormality tolerance for texel frames.
pub const FRAME_TOL: f64 = 1e-6;

/// Number of coefficients of an order-`order` expansion.
pub const fn coeff_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Flat index of band `l`, azimuthal index `m` (|m| <= l).
pub const fn flat_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Inverse of [`flat_index`]: returns (l, m).
pub fn band_of(index: usize) -> (usize, i64) {
    let mut l = (index as f64).sqrt() as usize;
    // Guard against float rounding at band boundaries.
    if (l + 1) * (l + 1) <= index {
        l += 1;
    } else if l * l > index {
        l -= 1;
    }
    let m = index as i64 - (l * l + l) as i64;
    (l, m)
}

/// A unit direction, validated on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction(Vector3<f64>);

impl Direction {
    /// Wraps `v`, requiring |v| to be within [`DIR_TOL`] of 1.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > DIR_TOL {
            return Err(Error::NonUnitDirection { norm });
        }
        Ok(Direction(v))
    }

    /// Normalizes `v`; fails on near-zero input.
    pub fn normalize(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(Error::NonUnitDirection { norm });
        }
        Ok(Direction(v / norm))
    }

    pub fn as_vec(&self) -> Vector3<f64> {
        self.0
    }
}

/// Dense harmonic coefficient block; `channels` is 1 (scalar) or 3 (RGB).
/// Storage is channel-major: channel c occupies
/// `c*coeff_count(order) .. (c+1)*coeff_count(order)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShVector {
    order: usize,
    channels: usize,
    coeffs: Vec<f64>,
}

impl ShVector {
    pub fn zeros(order: usize, channels: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::LayoutMismatch(format!("channels must be 1 or 3, got {channels}")));
        }
        Ok(ShVector { order, channels, coeffs: vec![0.0; channels * coeff_count(order)] })
    }

    pub fn from_coeffs(order: usize, channels: usize, coeffs: Vec<f64>) -> Result<Self> {
        let mut v = Self::zeros(order, channels)?;
        if coeffs.len() != v.coeffs.len() {
            return Err(Error::LayoutMismatch(format!(
                "expected {} coefficients, got {}",
                v.coeffs.len(),
                coeffs.len()
            )));
        }
        v.coeffs = coeffs;
        Ok(v)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> usize {
        coeff_count(self.order)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let s = self.stride();
        &self.coeffs[c * s..(c + 1) * s]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.coeffs[c * s..(c + 1) * s]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Evaluates the expansion at `dir`, one value per channel.
    pub fn eval(&self, dir: Direction) -> Vec<f64> {
        let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
        let n = coeff_count(self.order);
        sh_basis_into(&dir.as_vec(), self.order, &mut basis[..n]);
        (0..self.channels)
            .map(|c| dot(self.channel(c), &basis[..n]))
            .collect()
    }

    /// Max |coefficient| difference against `other` (same layout required).
    pub fn max_abs_diff(&self, other: &ShVector) -> f64 {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-texel compressed transport: three zonal lobes tied to the tangent,
/// bitangent, and normal axes. `colored[lobe][channel][l]` covers bands
/// 0..=3; `mono[lobe][l-4]` covers bands 4..=8 shared across channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZhLobes {
    pub colored: [[[f64; COLORED_ORDER + 1]; 3]; 3],
    pub mono: [[f64; MAX_ORDER - COLORED_ORDER]; 3],
}

/// Scalars in the flat [`ZhLobes`] layout.
pub const ZH_PARAMS: usize = 3 * 3 * (COLORED_ORDER + 1) + 3 * (MAX_ORDER - COLORED_ORDER);

impl ZhLobes {
    pub fn zeros() -> Self {
        ZhLobes { colored: [[[0.0; 4]; 3]; 3], mono: [[0.0; 5]; 3] }
    }

    /// Flat layout: colored lobe-major (lobe, channel, band), then mono
    /// (lobe, band). 51 scalars total.
    pub fn to_flat(&self) -> [f64; ZH_PARAMS] {
        let mut out = [0.0; ZH_PARAMS];
        let mut k = 0;
        for lobe in 0..3 {
            for ch in 0..3 {
                for l in 0..=COLORED_ORDER {
                    out[k] = self.colored[lobe][ch][l];
                    k += 1;
                }
            }
        }
        for lobe in 0..3 {
            for b in 0..MAX_ORDER - COLORED_ORDER {
                out[k] = self.mono[lobe][b];
                k += 1;
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != ZH_PARAMS {
            return Err(Error::LayoutMismatch(format!(
                "zonal lobe block needs {ZH_PARAMS} scalars, got {}",
                flat.len()
            )));
        }
        let mut z = ZhLobes::zeros();
        let mut k = 0;
        for lobe in 0..3 {
            for ch in 0..3 {
                for l in 0..=COLORED_ORDER {
                    z.colored[lobe][ch][l] = flat[k];
                    k += 1;
                }
            }
        }
        for lobe in 0..3 {
            for b in 0..MAX_ORDER - COLORED_ORDER {
                z.mono[lobe][b] = flat[k];
                k += 1;
            }
        }
        Ok(z)
    }
}

const FACTORIALS: [f64; 17] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
];

/// sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!), the orthonormalization constant.
fn norm_factor(l: usize, m: usize) -> f64 {
    ((2 * l + 1) as f64 / (4.0 * PI) * FACTORIALS[l - m] / FACTORIALS[l + m]).sqrt()
}

/// Evaluates the real basis for all bands `0..=order` at unit vector `v`.
/// `out` must hold `coeff_count(order)` slots. No validation; hot path.
pub(crate) fn sh_basis_into(v: &Vector3<f64>, order: usize, out: &mut [f64]) {
    debug_assert!(order <= MAX_ORDER);
    debug_assert_eq!(out.len(), coeff_count(order));
    let (x, y, z) = (v.x, v.y, v.z);
    let rho = (x * x + y * y).sqrt();
    // Azimuth recurrences; the m>0 Legendre terms vanish with rho, so the
    // fallback values at the poles never contribute.
    let (c1, s1) = if rho > 1e-300 { (x / rho, y / rho) } else { (1.0, 0.0) };
    let mut cos_m = [1.0f64; MAX_ORDER + 1];
    let mut sin_m = [0.0f64; MAX_ORDER + 1];
    for m in 1..=order {
        cos_m[m] = cos_m[m - 1] * c1 - sin_m[m - 1] * s1;
        sin_m[m] = sin_m[m - 1] * c1 + cos_m[m - 1] * s1;
    }

    // Associated Legendre values with Condon-Shortley phase. Note
    // (1-z^2)^(m/2) = rho^m on the unit sphere.
    let mut p = [[0.0f64; MAX_ORDER + 1]; MAX_ORDER + 1];
    p[0][0] = 1.0;
    let mut pmm = 1.0;
    for m in 1..=order {
        pmm *= -((2 * m - 1) as f64) * rho;
        p[m][m] = pmm;
    }
    for m in 0..order {
        p[m + 1][m] = z * (2 * m + 1) as f64 * p[m][m];
    }
    for m in 0..=order {
        for l in (m + 2)..=order {
            p[l][m] = ((2 * l - 1) as f64 * z * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m])
                / (l - m) as f64;
        }
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..=order {
        let base = l * l + l;
        out[base] = norm_factor(l, 0) * p[l][0];
        for m in 1..=l {
            let k = sqrt2 * norm_factor(l, m) * p[l][m];
            out[base + m] = k * cos_m[m];
            out[base - m] = k * sin_m[m];
        }
    }
}

/// Evaluates the full real basis at `dir` for bands `0..=order`.
pub fn sh_eval_basis(dir: Direction, order: usize) -> Result<ShVector> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
    }
    let mut v = ShVector::zeros(order, 1)?;
    sh_basis_into(&dir.as_vec(), order, v.channel_mut(0));
    Ok(v)
}

/// Places per-band zonal coefficients on the axis `dir`:
/// `out[l,m] = zonal[l] * Y_lm(dir)`.
///
/// With `zonal[l]` pre-multiplied by [`zonal_rotation_scale`], the output
/// equals the harmonic expansion of the z-aligned zonal function rotated so
/// its axis points along `dir`; without the factor it is the raw form used by
/// the transport lobes, which absorb the constant into the learned values.
pub fn zh_expand(zonal: &[f64], dir: Direction) -> Result<ShVector> {
    if zonal.is_empty() {
        return Err(Error::LayoutMismatch("zonal coefficient list is empty".into()));
    }
    let order = zonal.len() - 1;
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
    }
    let mut out = ShVector::zeros(order, 1)?;
    let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
    let n = coeff_count(order);
    sh_basis_into(&dir.as_vec(), order, &mut basis[..n]);
    let coeffs = out.channel_mut(0);
    for l in 0..=order {
        for m in -(l as i64)..=(l as i64) {
            let i = (l * l + l) as i64 + m;
            coeffs[i as usize] = zonal[l] * basis[i as usize];
        }
    }
    Ok(out)
}

/// sqrt(4 pi / (2l+1)): converts a band's zonal coefficient into the
/// coefficient scale produced by rotating the z-aligned zonal function.
pub fn zonal_rotation_scale(l: usize) -> f64 {
    (4.0 * PI / (2 * l + 1) as f64).sqrt()
}

fn frame_residual(frame: &Matrix3<f64>) -> f64 {
    let t = frame.column(0);
    let b = frame.column(1);
    let n = frame.column(2);
    let mut r: f64 = 0.0;
    r = r.max((t.norm() - 1.0).abs());
    r = r.max((b.norm() - 1.0).abs());
    r = r.max((n.norm() - 1.0).abs());
    r = r.max(t.dot(&b).abs());
    r = r.max(t.dot(&n).abs());
    r = r.max(b.dot(&n).abs());
    r = r.max((frame.determinant() - 1.0).abs());
    r
}

/// Expands a texel's three zonal lobes into a 3-channel order-8 vector by
/// evaluating the tangent lobe at the frame's first column, the bitangent
/// lobe at the second and the normal lobe at the third, then summing.
/// Bands above [`COLORED_ORDER`] use the shared monochromatic coefficients.
pub fn transport_from_zh(z: &ZhLobes, frame: &Matrix3<f64>) -> Result<ShVector> {
    let residual = frame_residual(frame);
    if residual > FRAME_TOL {
        return Err(Error::InvalidFrame { residual });
    }
    let mut out = ShVector::zeros(MAX_ORDER, 3)?;
    let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
    for lobe in 0..3 {
        let axis = frame.column(lobe).into_owned();
        sh_basis_into(&axis, MAX_ORDER, &mut basis);
        for l in 0..=MAX_ORDER {
            for i in l * l..(l + 1) * (l + 1) {
                if l <= COLORED_ORDER {
                    for ch in 0..3 {
                        out.channel_mut(ch)[i] += z.colored[lobe][ch][l] * basis[i];
                    }
                } else {
                    let zl = z.mono[lobe][l - COLORED_ORDER - 1];
                    for ch in 0..3 {
                        out.channel_mut(ch)[i] += zl * basis[i];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Projects the rig's active point lights as ideal deltas:
/// `L_i += intensity * Y_i(dir)` with `dir` the light position normalized
/// from the scene origin (distant-light approximation).
pub fn sh_project_point_lights(rig: &LightRig, order: usize) -> Result<ShVector> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
    }
    let mut out = ShVector::zeros(order, 3)?;
    let n = coeff_count(order);
    let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
    for (_, light) in rig.active_lights() {
        let dir = Direction::normalize(light.position)?;
        sh_basis_into(&dir.as_vec(), order, &mut basis[..n]);
        for ch in 0..3 {
            let coeffs = out.channel_mut(ch);
            for i in 0..n {
                coeffs[i] += light.intensity[ch] * basis[i];
            }
        }
    }
    Ok(out)
}

/// Projects a lat-long environment map by Riemann quadrature over texel
/// centers: `L_i = sum radiance * Y_i(dir) * solid_angle`.
pub fn sh_project_env(env: &EnvironmentMap, order: usize) -> Result<ShVector> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder { order, max: MAX_ORDER });
    }
    let mut out = ShVector::zeros(order, 3)?;
    let n = coeff_count(order);
    let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
    for y in 0..env.height() {
        let domega = env.pixel_solid_angle(y);
        for x in 0..env.width() {
            let dir = env.pixel_direction(x, y);
            sh_basis_into(&dir, order, &mut basis[..n]);
            let radiance = env.texel(x, y);
            for ch in 0..3 {
                let w = radiance[ch] * domega;
                let coeffs = out.channel_mut(ch);
                for i in 0..n {
                    coeffs[i] += w * basis[i];
                }
            }
        }
    }
    Ok(out)
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on the Legendre
/// recurrence from Chebyshev initial guesses). Deterministic.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_{n-1}(x) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0f64, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Reference rotation: samples `w -> f(R^-1 w)` on a dense deterministic
/// product grid (Gauss-Legendre in cos(theta), uniform azimuth) and projects
/// it back onto the basis. Both rules are exact for the polynomial orders a
/// band-limited expansion produces, so the only error is roundoff.
pub fn sh_rotate_bruteforce(v: &ShVector, rot: &Rotation3<f64>, samples: usize) -> Result<ShVector> {
    if samples < 10_000 {
        return Err(Error::malformed(format!(
            "brute-force rotation needs at least 10000 quadrature samples, got {samples}"
        )));
    }
    let order = v.order();
    let channels = v.channels();
    let n = coeff_count(order);
    let n_theta = ((samples as f64 / 2.0).sqrt().floor() as usize).max(2 * MAX_ORDER + 2);
    let n_phi = 2 * n_theta;
    let (nodes, node_weights) = gauss_legendre(n_theta);
    let inv = rot.inverse();

    use rayon::prelude::*;
    let rows: Vec<Vec<f64>> = (0..n_theta)
        .into_par_iter()
        .map(|it| {
            let mut acc = vec![0.0f64; channels * n];
            let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
            let mut src_basis = [0.0f64; coeff_count(MAX_ORDER)];
            let ct = nodes[it];
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let weight = node_weights[it] * (2.0 * PI / n_phi as f64);
            for ip in 0..n_phi {
                let phi = (ip as f64 + 0.5) * (2.0 * PI / n_phi as f64);
                let w = Vector3::new(st * phi.cos(), st * phi.sin(), ct);
                sh_basis_into(&w, order, &mut basis[..n]);
                let src = inv * w;
                sh_basis_into(&src, order, &mut src_basis[..n]);
                for c in 0..channels {
                    let f = dot(v.channel(c), &src_basis[..n]);
                    let fw = f * weight;
                    let out = &mut acc[c * n..(c + 1) * n];
                    for i in 0..n {
                        out[i] += fw * basis[i];
                    }
                }
            }
            acc
        })
        .collect();

    let mut out = ShVector::zeros(order, channels)?;
    for row in rows {
        for (o, r) in out.coeffs_mut().iter_mut().zip(&row) {
            *o += r;
        }
    }
    Ok(out)
}

/// Texel parameterization choices for the diffuse transport.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TexelRepr {
    /// Full harmonic transport: colored bands 0..=3, monochromatic 4..=8.
    Sh,
    /// Three-lobe zonal compression of the same layout.
    Zh,
}

/// Per-texel scalar count of the diffuse transport representation.
pub fn texel_param_count(repr: TexelRepr) -> usize {
    let colored = coeff_count(COLORED_ORDER);
    let full = coeff_count(MAX_ORDER);
    match repr {
        // 3 colored channels of the low bands plus monochromatic high bands.
        TexelRepr::Sh => 3 * colored + (full - colored),
        // Three lobes: colored low bands, monochromatic high bands.
        TexelRepr::Zh => 3 * 3 * (COLORED_ORDER + 1) + 3 * (MAX_ORDER - COLORED_ORDER),
    }
}

/// Uniform random unit vector (used by quadrature tests and validation).
pub fn uniform_dir<R: rand::Rng>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lights::PointLight;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const Y00: f64 = 0.28209479177387814;
    const Y10: f64 = 0.4886025119029199;

    fn dir(v: Vector3<f64>) -> Direction {
        Direction::normalize(v).unwrap()
    }

    #[test]
    fn band0_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let d = dir(uniform_dir(&mut rng));
            let b = sh_eval_basis(d, 8).unwrap();
            assert!((b.channel(0)[0] - Y00).abs() < 1e-14);
        }
    }

    #[test]
    fn band1_at_z_axis() {
        let b = sh_eval_basis(dir(Vector3::z()), 1).unwrap();
        let c = b.channel(0);
        assert!((c[1]).abs() < 1e-15);
        assert!((c[2] - Y10).abs() < 1e-12);
        assert!((c[3]).abs() < 1e-15);
    }

    #[test]
    fn condon_shortley_signs() {
        let bx = sh_eval_basis(dir(Vector3::x()), 1).unwrap();
        assert!((bx.channel(0)[3] + Y10).abs() < 1e-12, "Y_11(+x) = -0.4886");
        let by = sh_eval_basis(dir(Vector3::y()), 1).unwrap();
        assert!((by.channel(0)[1] + Y10).abs() < 1e-12, "Y_1-1(+y) = -0.4886");
    }

    #[test]
    fn index_bijection_covers_each_slot_once() {
        let mut seen = [false; coeff_count(MAX_ORDER)];
        for l in 0..=MAX_ORDER {
            for m in -(l as i64)..=(l as i64) {
                let i = (l * l + l) as i64 + m;
                assert!(!seen[i as usize]);
                seen[i as usize] = true;
                assert_eq!(band_of(i as usize), (l, m));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    /// Monte-Carlo Gram matrix: the basis should be orthonormal, with the
    /// sampling error of 1e5 uniform directions bounded well below 0.02.
    #[test]
    fn orthonormality_gram_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = coeff_count(MAX_ORDER);
        let samples = 100_000;
        let mut gram = vec![0.0f64; n * n];
        let mut basis = [0.0f64; coeff_count(MAX_ORDER)];
        for _ in 0..samples {
            let d = uniform_dir(&mut rng);
            sh_basis_into(&d, MAX_ORDER, &mut basis);
            for i in 0..n {
                for j in i..n {
                    gram[i * n + j] += basis[i] * basis[j];
                }
            }
        }
        let scale = 4.0 * PI / samples as f64;
        let mut max_off = 0.0f64;
        let mut max_diag = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let g = gram[i * n + j] * scale;
                if i == j {
                    max_diag = max_diag.max((g - 1.0).abs());
                } else {
                    max_off = max_off.max(g.abs());
                }
            }
        }
        assert!(max_off < 0.02, "max off-diagonal {max_off}");
        assert!(max_diag < 0.05, "max diagonal deviation {max_diag}");
    }

    #[test]
    fn rejects_non_unit_direction() {
        let err = Direction::new(Vector3::new(0.0, 0.0, 1.001)).unwrap_err();
        assert!(matches!(err, Error::NonUnitDirection { .. }));
    }

    #[test]
    fn rejects_unsupported_order() {
        let err = sh_eval_basis(dir(Vector3::z()), 9).unwrap_err();
        assert!(matches!(err, Error::UnsupportedOrder { order: 9, max: 8 }));
    }

    #[test]
    fn zh_band0_ignores_axis() {
        let a = zh_expand(&[2.5], dir(Vector3::z())).unwrap();
        let b = zh_expand(&[2.5], dir(Vector3::new(1.0, -2.0, 0.5))).unwrap();
        assert_eq!(a.channel(0)[0], b.channel(0)[0]);
        assert!((a.channel(0)[0] - 2.5 * Y00).abs() < 1e-14);
    }

    /// zh_expand with convention-scaled coefficients must match the
    /// quadrature rotation of the z-aligned zonal function.
    #[test]
    fn zonal_rotation_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..8 {
            let order = 2 + trial % 7;
            let zonal: Vec<f64> = (0..=order).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rot = random_rotation(&mut rng);

            let mut aligned = ShVector::zeros(order, 1).unwrap();
            for l in 0..=order {
                aligned.channel_mut(0)[l * l + l] = zonal[l];
            }
            let reference = sh_rotate_bruteforce(&aligned, &rot, 100_000).unwrap();

            let scaled: Vec<f64> = zonal
                .iter()
                .enumerate()
                .map(|(l, z)| z * zonal_rotation_scale(l))
                .collect();
            let axis = dir(rot * Vector3::z());
            let fast = zh_expand(&scaled, axis).unwrap();

            let err = fast.max_abs_diff(&reference);
            assert!(err < 1e-3, "trial {trial}: max coefficient error {err}");
        }
    }

    fn random_rotation<R: Rng>(rng: &mut R) -> Rotation3<f64> {
        let axis = uniform_dir(rng);
        let angle = rng.gen_range(0.0..PI);
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
    }

    #[test]
    fn bruteforce_identity_rotation_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v = ShVector::zeros(8, 1).unwrap();
        for c in v.coeffs_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let out = sh_rotate_bruteforce(&v, &Rotation3::identity(), 100_000).unwrap();
        assert!(out.max_abs_diff(&v) < 1e-2);
    }

    #[test]
    fn bruteforce_band0_is_rotation_invariant() {
        let mut v = ShVector::zeros(0, 1).unwrap();
        v.channel_mut(0)[0] = 1.7;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rot = random_rotation(&mut rng);
        let out = sh_rotate_bruteforce(&v, &rot, 20_000).unwrap();
        assert!((out.channel(0)[0] - 1.7).abs() < 1e-3);
    }

    /// Band 1 transforms like a vector: map coefficients to the cartesian
    /// lobe direction, rotate, and map back.
    #[test]
    fn bruteforce_band1_matches_vector_rotation() {
        let coeffs = [0.0, 0.4, -0.8, 0.3];
        let v = ShVector::from_coeffs(1, 1, coeffs.to_vec()).unwrap();
        let alpha = 1.1;
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), alpha);
        let out = sh_rotate_bruteforce(&v, &rot, 100_000).unwrap();

        // f = a*Y_1-1 + b*Y_10 + d*Y_11 = K*(-a*y + b*z - d*x); rotating f by R
        // maps the gradient vector p = (-d, -a, b) to R*p.
        let (a, b, d) = (coeffs[1], coeffs[2], coeffs[3]);
        let p = Vector3::new(-d, -a, b);
        let p2 = rot * p;
        let expect = [-p2.y, p2.z, -p2.x];
        for (i, e) in expect.iter().enumerate() {
            assert!(
                (out.channel(0)[1 + i] - e).abs() < 1e-3,
                "band-1 slot {i}: {} vs {e}",
                out.channel(0)[1 + i]
            );
        }
    }

    #[test]
    fn transport_rejects_skewed_frame() {
        let mut frame = Matrix3::identity();
        frame[(0, 1)] = 0.1;
        let err = transport_from_zh(&ZhLobes::zeros(), &frame).unwrap_err();
        assert!(matches!(err, Error::InvalidFrame { .. }));
    }

    #[test]
    fn transport_is_linear_in_the_lobes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frame = random_rotation(&mut rng).matrix().into_owned();
        let mut a = ZhLobes::zeros();
        let mut b = ZhLobes::zeros();
        let mut fa = a.to_flat();
        let mut fb = b.to_flat();
        for k in 0..ZH_PARAMS {
            fa[k] = rng.gen_range(-1.0..1.0);
            fb[k] = rng.gen_range(-1.0..1.0);
        }
        a = ZhLobes::from_flat(&fa).unwrap();
        b = ZhLobes::from_flat(&fb).unwrap();
        let alpha = 0.37;
        let mut combined = [0.0; ZH_PARAMS];
        for k in 0..ZH_PARAMS {
            combined[k] = alpha * fa[k] + fb[k];
        }
        let c = ZhLobes::from_flat(&combined).unwrap();

        let ta = transport_from_zh(&a, &frame).unwrap();
        let tb = transport_from_zh(&b, &frame).unwrap();
        let tc = transport_from_zh(&c, &frame).unwrap();
        for i in 0..tc.coeffs().len() {
            let lin = alpha * ta.coeffs()[i] + tb.coeffs()[i];
            assert!((tc.coeffs()[i] - lin).abs() < 1e-12);
        }
    }

    /// Rotating the frame must agree with brute-force rotation of the
    /// expanded transport once the zonal convention scale is applied.
    #[test]
    fn transport_rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut z = ZhLobes::zeros();
        let mut flat = z.to_flat();
        for v in flat.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        z = ZhLobes::from_flat(&flat).unwrap();
        // Convention-scale every band so the expansion transforms exactly
        // like a rotated function.
        let mut scaled = z;
        for lobe in 0..3 {
            for ch in 0..3 {
                for l in 0..=COLORED_ORDER {
                    scaled.colored[lobe][ch][l] *= zonal_rotation_scale(l);
                }
            }
            for l in COLORED_ORDER + 1..=MAX_ORDER {
                scaled.mono[lobe][l - COLORED_ORDER - 1] *= zonal_rotation_scale(l);
            }
        }

        let rot = random_rotation(&mut rng);
        let base = Matrix3::identity();
        let rotated_frame = rot.matrix() * base;

        let direct = transport_from_zh(&scaled, &rotated_frame).unwrap();
        let unrotated = transport_from_zh(&scaled, &base).unwrap();
        let reference = sh_rotate_bruteforce(&unrotated, &rot, 150_000).unwrap();
        let err = direct.max_abs_diff(&reference);
        assert!(err < 1e-3, "equivariance error {err}");
    }

    #[test]
    fn point_light_projection_at_z() {
        let rig = LightRig {
            dome_radius: 1.0,
            lights: vec![PointLight { position: Vector3::new(0.0, 0.0, 1.0), intensity: [1.0; 3] }],
            active: vec![true],
        };
        let l = sh_project_point_lights(&rig, 1).unwrap();
        for ch in 0..3 {
            let c = l.channel(ch);
            assert!((c[0] - Y00).abs() < 1e-12);
            assert!(c[1].abs() < 1e-15);
            assert!((c[2] - Y10).abs() < 1e-12);
            assert!(c[3].abs() < 1e-15);
        }
    }

    #[test]
    fn empty_rig_projects_to_zero() {
        let rig = LightRig { dome_radius: 1.0, lights: vec![], active: vec![] };
        let l = sh_project_point_lights(&rig, 8).unwrap();
        assert!(l.coeffs().iter().all(|&c| c == 0.0));
    }

    /// Lights placed in antipodal equal-intensity pairs kill the odd bands.
    #[test]
    fn antipodal_pairs_cancel_odd_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut lights = Vec::new();
        for _ in 0..32 {
            let d = uniform_dir(&mut rng);
            for s in [1.0, -1.0] {
                lights.push(PointLight { position: s * d, intensity: [0.8; 3] });
            }
        }
        let n = lights.len();
        let rig = LightRig { dome_radius: 1.0, lights, active: vec![true; n] };
        let l = sh_project_point_lights(&rig, MAX_ORDER).unwrap();
        for ch in 0..3 {
            for lband in (1..=MAX_ORDER).step_by(2) {
                for i in lband * lband..(lband + 1) * (lband + 1) {
                    assert!(
                        l.channel(ch)[i].abs() < 1e-12,
                        "odd band {lband} slot {i} = {}",
                        l.channel(ch)[i]
                    );
                }
            }
        }
    }

    #[test]
    fn constant_env_projects_to_band0() {
        let env = EnvironmentMap::constant(512, 256, [1.0; 3]);
        let l = sh_project_env(&env, MAX_ORDER).unwrap();
        let sqrt4pi = (4.0 * PI).sqrt();
        for ch in 0..3 {
            assert!(
                (l.channel(ch)[0] - sqrt4pi).abs() < 2e-3,
                "band 0 = {}",
                l.channel(ch)[0]
            );
            for i in 1..coeff_count(MAX_ORDER) {
                assert!(l.channel(ch)[i].abs() < 1e-3, "slot {i} = {}", l.channel(ch)[i]);
            }
        }
    }

    #[test]
    fn black_env_projects_to_zero() {
        let env = EnvironmentMap::constant(16, 8, [0.0; 3]);
        let l = sh_project_env(&env, 4).unwrap();
        assert!(l.coeffs().iter().all(|&c| c == 0.0));
    }

    /// A single bright texel is the same projection as a delta light whose
    /// intensity carries the texel's solid angle.
    #[test]
    fn single_texel_env_matches_delta_light() {
        let mut env = EnvironmentMap::constant(64, 32, [0.0; 3]);
        let (px, py) = (17, 9);
        env.set_texel(px, py, [3.0, 2.0, 1.0]);
        let from_env = sh_project_env(&env, MAX_ORDER).unwrap();

        let domega = env.pixel_solid_angle(py);
        let d = env.pixel_direction(px, py);
        let rig = LightRig {
            dome_radius: 1.0,
            lights: vec![PointLight {
                position: d,
                intensity: [3.0 * domega, 2.0 * domega, 1.0 * domega],
            }],
            active: vec![true],
        };
        let from_delta = sh_project_point_lights(&rig, MAX_ORDER).unwrap();
        for (a, b) in from_env.coeffs().iter().zip(from_delta.coeffs()) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
            assert!(rel < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn texel_param_counts() {
        assert_eq!(texel_param_count(TexelRepr::Sh), 113);
        assert_eq!(texel_param_count(TexelRepr::Zh), 51);
        assert_eq!(ZH_PARAMS, 51);
    }
}
