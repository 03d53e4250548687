use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Planar RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    // [channel][y][x]
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("image {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut img = Self::new(width, height)?;
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    img.set(c, x, y, f(c, x, y));
                }
            }
        }
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Stores `v` clamped to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        self.plane(c).iter().sum::<f64>() / self.pixels() as f64
    }

    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for c in 0..3 {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, self.width - 1 - x, y, self.get(c, x, y));
                }
            }
        }
        out
    }

    /// Binary PPM (`P6`, maxval 255).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(3 * self.pixels());
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    bytes.push((self.get(c, x, y) * 255.0).round() as u8);
                }
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self> {
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < raw.len() && (raw[pos].is_ascii_whitespace() || raw[pos] == b'#') {
                if raw[pos] == b'#' {
                    while pos < raw.len() && raw[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ppm_err("truncated header"));
            }
            fields.push(String::from_utf8_lossy(&raw[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P6" {
            return Err(ppm_err(&format!("unsupported magic {:?}", fields[0])));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| ppm_err(&format!("bad number {s:?}")));
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(ppm_err(&format!("unsupported maxval {maxval}")));
        }
        let mut img = Self::new(width, height)?;
        let body = raw.get(pos..pos + 3 * width * height).ok_or_else(|| ppm_err("truncated raster"))?;
        for (i, px) in body.chunks_exact(3).enumerate() {
            let (x, y) = (i % width, i / width);
            for c in 0..3 {
                img.set(c, x, y, px[c] as f64 / maxval as f64);
            }
        }
        Ok(img)
    }
}

fn ppm_err(msg: &str) -> Error {
    Error::Parse {
        line: 0,
        message: format!("ppm: {msg}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_flip_is_identity() {
        let img = RgbImage::from_fn(5, 3, |c, x, y| (c + 2 * x + 3 * y) as f64 / 20.0).unwrap();
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_ne!(img.flip_horizontal(), img);
    }

    #[test]
    fn ppm_round_trip_on_byte_grid() {
        let img = RgbImage::from_fn(4, 2, |c, x, y| ((c * 40 + x * 17 + y * 90) % 256) as f64 / 255.0).unwrap();
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n4 2\n255\n"));
        let back = RgbImage::read_ppm(buf.as_slice()).unwrap();
        assert!(back.l2_distance(&img) < 1e-12);
    }

    #[test]
    fn ppm_with_comment_and_errors() {
        let mut data = b"P6 # comment\n1 1\n255\n".to_vec();
        data.extend_from_slice(&[255, 0, 51]);
        let img = RgbImage::read_ppm(data.as_slice()).unwrap();
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert!((img.get(2, 0, 0) - 0.2).abs() < 1e-12);
        assert!(RgbImage::read_ppm(&b"P3\n1 1\n255\n"[..]).is_err());
        assert!(RgbImage::read_ppm(&b"P6\n2 2\n255\n\x00"[..]).is_err());
    }

    #[test]
    fn zero_sized_image_rejected() {
        assert!(RgbImage::new(0, 4).is_err());
    }
}
