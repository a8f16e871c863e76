//! Float image buffers plus PFM and PNG codecs.
//!
//! Images hold linear radiance as f64 in memory (row-major, interleaved
//! channels, row 0 at the top). PFM files store 32-bit floats, so a write
//! truncates to f32; values produced by reading a PFM survive a rewrite
//! bit-exactly. PNG export tone-maps with gamma 2.2 for previews only and is
//! never used for numeric comparison.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "images are 1- or 3-channel");
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    /// Rec. 709 luma for 3-channel images; the value itself for 1-channel.
    pub fn luminance(&self, x: usize, y: usize) -> f64 {
        if self.channels == 1 {
            self.get(x, y, 0)
        } else {
            0.2126 * self.get(x, y, 0) + 0.7152 * self.get(x, y, 1) + 0.0722 * self.get(x, y, 2)
        }
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes a PFM ("PF" for 3 channels, "Pf" for 1): little-endian f32,
    /// rows bottom-to-top.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        write!(w, "{tag}\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in 0..self.channels {
                    w.write_all(&(self.get(x, y, c) as f32).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode_pfm(&bytes).map_err(|e| match e {
            Error::Malformed(m) => Error::Malformed(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn decode_pfm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut token = || -> Result<String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::malformed("truncated PFM header"));
            }
            let t = std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| Error::malformed("non-ascii PFM header"))?
                .to_string();
            // Consume the single whitespace terminating the token.
            if pos < bytes.len() {
                pos += 1;
            }
            Ok(t)
        };

        let tag = token()?;
        let channels = match tag.as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(Error::malformed(format!("bad PFM tag {other:?}"))),
        };
        let width: usize = token()?
            .parse()
            .map_err(|_| Error::malformed("bad PFM width"))?;
        let height: usize = token()?
            .parse()
            .map_err(|_| Error::malformed("bad PFM height"))?;
        let scale: f64 = token()?
            .parse()
            .map_err(|_| Error::malformed("bad PFM scale"))?;
        let little_endian = scale < 0.0;

        let expected = width * height * channels * 4;
        let payload = &bytes[pos..];
        if payload.len() < expected {
            return Err(Error::malformed(format!(
                "PFM payload too short: {} of {expected} bytes",
                payload.len()
            )));
        }
        let mut img = Image::new(width, height, channels);
        let mut off = 0;
        for y in (0..height).rev() {
            for x in 0..width {
                for c in 0..channels {
                    let raw: [u8; 4] = payload[off..off + 4].try_into().unwrap();
                    let v = if little_endian {
                        f32::from_le_bytes(raw)
                    } else {
                        f32::from_be_bytes(raw)
                    };
                    img.set(x, y, c, v as f64);
                    off += 4;
                }
            }
        }
        Ok(img)
    }

    /// Tone-mapped 8-bit preview: clamp to [0,1], gamma 2.2.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px = |c: usize| -> u8 {
                    let v = self.get(x, y, c.min(self.channels - 1)).clamp(0.0, 1.0);
                    (v.powf(1.0 / 2.2) * 255.0).round() as u8
                };
                buf.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
            }
        }
        buf.save(path)
            .map_err(|e| Error::malformed(format!("png write {}: {e}", path.display())))
    }

    /// Loads an 8-bit PNG and decodes sRGB to linear radiance.
    pub fn read_png_srgb(path: &Path) -> Result<Self> {
        let decoded = image::open(path)
            .map_err(|e| Error::malformed(format!("png read {}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        let mut img = Image::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let p = decoded.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    img.set(x, y, c, srgb_to_linear(p[c] as f64 / 255.0));
                }
            }
        }
        Ok(img)
    }
}

/// Piecewise sRGB electro-optical transfer function.
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_color() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        let mut img = Image::new(7, 5, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            // f32-representable values round-trip bit-exactly.
            *v = (i as f32 * 0.37 - 3.0) as f64;
        }
        img.write_pfm(&path).unwrap();
        let back = Image::read_pfm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_round_trip_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pfm");
        let mut img = Image::new(3, 4, 1);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (0.25 * i as f32) as f64;
        }
        img.write_pfm(&path).unwrap();
        let back = Image::read_pfm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(Image::decode_pfm(b"P6\n2 2\n255\n").is_err());
        assert!(Image::decode_pfm(b"PF\n4 4\n-1.0\nxx").is_err());
    }

    #[test]
    fn png_round_trip_is_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = Image::new(4, 1, 3);
        for x in 0..4 {
            for c in 0..3 {
                img.set(x, 0, c, x as f64 / 3.0);
            }
        }
        img.write_png(&path).unwrap();
        let back = Image::read_png_srgb(&path).unwrap();
        for x in 1..4 {
            assert!(back.get(x, 0, 0) > back.get(x - 1, 0, 0));
        }
    }

    #[test]
    fn srgb_curve_endpoints() {
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert!((srgb_to_linear(1.0) - 1.0).abs() < 1e-12);
    }
}
