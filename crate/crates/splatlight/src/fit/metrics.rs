//! Image-quality metrics used to judge fits: masked PSNR and masked SSIM.

use crate::error::{Error, Result};
use crate::img::Image;

/// Peak signal-to-noise ratio against a unit peak, in dB. Identical images
/// return positive infinity. `mask` restricts the error mean to foreground
/// pixels; `None` uses every pixel.
pub fn metric_psnr(image: &Image, reference: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(image, reference, mask)?;
    let c = image.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for px in 0..image.width() * image.height() {
        if let Some(m) = mask {
            if !m[px] {
                continue;
            }
        }
        for ch in 0..c {
            let d = image.data()[px * c + ch] - reference.data()[px * c + ch];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::malformed("PSNR mask selects no pixels"));
    }
    let mse = sum / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5) and unit
/// dynamic range; the per-pixel map is averaged per channel over the mask.
/// Windows are clipped at the image border and renormalized.
pub fn metric_ssim(image: &Image, reference: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(image, reference, mask)?;
    let (w, h, c) = (image.width(), image.height(), image.channels());
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let half = (SSIM_WINDOW / 2) as i64;
    let kernel: Vec<f64> = (-half..=half)
        .map(|i| (-0.5 * (i as f64 / SSIM_SIGMA).powi(2)).exp())
        .collect();

    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let px = y as usize * w + x as usize;
            if let Some(m) = mask {
                if !m[px] {
                    continue;
                }
            }
            for ch in 0..c {
                let (mut wt, mut mx, mut my) = (0.0, 0.0, 0.0);
                let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
                for dy in -half..=half {
                    let yy_i = y + dy;
                    if yy_i < 0 || yy_i >= h as i64 {
                        continue;
                    }
                    for dx in -half..=half {
                        let xx_i = x + dx;
                        if xx_i < 0 || xx_i >= w as i64 {
                            continue;
                        }
                        let k = kernel[(dy + half) as usize] * kernel[(dx + half) as usize];
                        let q = (yy_i as usize * w + xx_i as usize) * c + ch;
                        let a = image.data()[q];
                        let b = reference.data()[q];
                        wt += k;
                        mx += k * a;
                        my += k * b;
                        xx += k * a * a;
                        yy += k * b * b;
                        xy += k * a * b;
                    }
                }
                mx /= wt;
                my /= wt;
                let vx = xx / wt - mx * mx;
                let vy = yy / wt - my * my;
                let cov = xy / wt - mx * my;
                let ssim = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                sum += ssim;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::malformed("SSIM mask selects no pixels"));
    }
    Ok(sum / n as f64)
}

fn check_shapes(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::LayoutMismatch("metric image shapes differ".into()));
    }
    if let Some(m) = mask {
        if m.len() != a.width() * a.height() {
            return Err(Error::LayoutMismatch("metric mask length differs".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(w, h, 3);
        for v in img.data_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn identical_images_saturate_both_metrics() {
        let img = noise_image(24, 18, 7);
        assert_eq!(metric_psnr(&img, &img, None).unwrap(), f64::INFINITY);
        assert!((metric_ssim(&img, &img, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_of_uniform_offset_is_closed_form() {
        let a = Image::new(16, 16, 3);
        let mut b = Image::new(16, 16, 3);
        for v in b.data_mut() {
            *v = 0.1;
        }
        // MSE = 0.01 -> 20 dB.
        let got = metric_psnr(&a, &b, None).unwrap();
        assert!((got - 20.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn psnr_respects_mask() {
        let a = noise_image(8, 8, 1);
        let mut b = a.clone();
        // Corrupt one pixel, then mask it out.
        for ch in 0..3 {
            b.data_mut()[ch] = 0.0;
        }
        let mut mask = vec![true; 64];
        mask[0] = false;
        assert_eq!(metric_psnr(&a, &b, Some(&mask)).unwrap(), f64::INFINITY);
        assert!(metric_psnr(&a, &b, None).unwrap().is_finite());
    }

    #[test]
    fn anticorrelated_checkerboards_score_near_zero_ssim() {
        let (w, h) = (32, 32);
        let mut a = Image::new(w, h, 3);
        let mut b = Image::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let v = ((x + y) % 2) as f64;
                for ch in 0..3 {
                    a.data_mut()[(y * w + x) * 3 + ch] = v;
                    b.data_mut()[(y * w + x) * 3 + ch] = 1.0 - v;
                }
            }
        }
        let s = metric_ssim(&a, &b, None).unwrap();
        assert!(s < 0.1, "anti-correlated SSIM {s}");
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let clean = noise_image(24, 24, 3);
        let mut noisy = clean.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for v in noisy.data_mut() {
            *v = (*v + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0);
        }
        let s = metric_ssim(&clean, &noisy, None).unwrap();
        assert!(s < 1.0 && s > 0.3, "noisy SSIM {s}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Image::new(4, 4, 3);
        let b = Image::new(5, 4, 3);
        assert!(metric_psnr(&a, &b, None).is_err());
        let c = Image::new(4, 4, 3);
        let short_mask = vec![true; 3];
        assert!(metric_ssim(&a, &c, Some(&short_mask)).is_err());
    }
}
