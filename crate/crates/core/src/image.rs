//! 8-bit grayscale frames, pixel rectangles and binary PGM I/O.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned integer rectangle in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// Frame produced by the sensor. Row-major, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl SensorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Range(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Range(format!(
                "pixel buffer has {} entries, expected {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Copy of `region`; the region must lie inside the frame.
    pub fn crop(&self, region: Rect) -> Result<SensorImage> {
        if !region.fits_in(self.width, self.height) {
            return Err(Error::Range(format!(
                "crop {region:?} outside {}x{} frame",
                self.width, self.height
            )));
        }
        Ok(SensorImage::from_fn(region.w, region.h, |x, y| {
            self.get(region.x + x, region.y + y)
        }))
    }

    /// Places the image in the top-left corner of a zero canvas at least `min_w`×`min_h`.
    pub fn zero_pad_to(&self, min_w: usize, min_h: usize) -> SensorImage {
        let w = self.width.max(min_w);
        let h = self.height.max(min_h);
        if w == self.width && h == self.height {
            return self.clone();
        }
        SensorImage::from_fn(w, h, |x, y| {
            if x < self.width && y < self.height {
                self.get(x, y)
            } else {
                0
            }
        })
    }

    /// Extends the image to at least `min_w`×`min_h` by edge replication.
    pub fn replicate_pad_to(&self, min_w: usize, min_h: usize) -> SensorImage {
        let w = self.width.max(min_w);
        let h = self.height.max(min_h);
        if w == self.width && h == self.height {
            return self.clone();
        }
        SensorImage::from_fn(w, h, |x, y| {
            self.get(x.min(self.width - 1), y.min(self.height - 1))
        })
    }

    pub fn region_mean_std(&self, region: Rect) -> (f64, f64) {
        let n = region.area() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for y in region.y..region.y + region.h {
            for x in region.x..region.x + region.w {
                let v = self.get(x, y) as f64;
                sum += v;
                sum_sq += v * v;
            }
        }
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        (mean, var.sqrt())
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Binary PGM (`P5`, maxval 255) encoding.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: &Path) -> Result<SensorImage> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_reader(BufReader::new(f))
    }

    /// Parses a binary PGM. Comment lines (`#`) in the header are skipped.
    pub fn from_pgm_reader<R: BufRead>(mut r: R) -> Result<SensorImage> {
        let mut tokens: Vec<String> = Vec::with_capacity(4);
        let mut line = String::new();
        while tokens.len() < 4 {
            line.clear();
            let n = r
                .read_line(&mut line)
                .map_err(|e| Error::Corrupt(format!("pgm header: {e}")))?;
            if n == 0 {
                return Err(Error::Corrupt("pgm header truncated".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_owned));
        }
        if tokens.len() != 4 || tokens[0] != "P5" {
            return Err(Error::Corrupt(format!("not a binary PGM header: {tokens:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Corrupt(format!("bad pgm header field `{s}`")))
        };
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval != 255 {
            return Err(Error::Corrupt(format!("unsupported maxval {maxval}")));
        }
        let mut pixels = vec![0u8; w * h];
        r.read_exact(&mut pixels)
            .map_err(|_| Error::Corrupt("pgm pixel data truncated".into()))?;
        SensorImage::new(w, h, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_is_exact() {
        let img = SensorImage::from_fn(3, 2, |x, y| (x + 10 * y) as u8);
        let bytes = img.to_pgm_bytes();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 10, 11, 12]);
        let back = SensorImage::from_pgm_reader(&bytes[..]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_rejects_truncated_and_ascii() {
        let img = SensorImage::filled(4, 4, 7);
        let bytes = img.to_pgm_bytes();
        assert!(SensorImage::from_pgm_reader(&bytes[..bytes.len() - 1]).is_err());
        assert!(SensorImage::from_pgm_reader(&b"P2\n1 1\n255\n0\n"[..]).is_err());
    }

    #[test]
    fn pgm_skips_comments() {
        let data = b"P5\n# made by hand\n2 1\n255\n\x05\x06";
        let img = SensorImage::from_pgm_reader(&data[..]).unwrap();
        assert_eq!(img.pixels(), &[5, 6]);
    }

    #[test]
    fn zero_pad_keeps_content() {
        let img = SensorImage::filled(2, 3, 9);
        let p = img.zero_pad_to(4, 4);
        assert_eq!((p.width(), p.height()), (4, 4));
        assert_eq!(p.get(1, 2), 9);
        assert_eq!(p.get(3, 3), 0);
    }
}
