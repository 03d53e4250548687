use rand::Rng;

use super::image::RgbImage;
use super::{PerturbMode, PerturbSpec};
use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Scale red and blue so their means match the green mean, then clamp.
pub fn color_normalize(img: &RgbImage) -> Result<RgbImage> {
    let (r_mean, g_mean, b_mean) = (img.channel_mean(0), img.channel_mean(1), img.channel_mean(2));
    if r_mean <= 0.0 || b_mean <= 0.0 {
        return Err(Error::DegenerateImage(format!(
            "channel means r={r_mean}, b={b_mean}"
        )));
    }
    let mut out = img.clone();
    for (c, mean) in [(0, r_mean), (2, b_mean)] {
        let gain = g_mean / mean;
        for v in out.plane_mut(c) {
            *v = (*v * gain).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Parameter ranges of one augmentation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    pub max_rotation_deg: f64,
    pub erase_fraction: (f64, f64),
    pub jitter: (f64, f64),
    /// Extra shear or translation, as a fraction of the image size.
    pub geometric: Option<f64>,
}

impl AugmentRanges {
    pub const WEAK: Self = Self {
        max_rotation_deg: 180.0,
        erase_fraction: (0.02, 0.33),
        jitter: (0.9, 1.1),
        geometric: None,
    };

    pub const STRONG: Self = Self {
        max_rotation_deg: 180.0,
        erase_fraction: (0.02, 0.5),
        jitter: (0.6, 1.4),
        geometric: Some(0.2),
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EraseRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl EraseRect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometric {
    Shear(f64),
    Translate(f64, f64),
}

/// What a pipeline run actually did.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentTrace {
    pub flipped: bool,
    pub rotation_deg: f64,
    pub geometric: Option<Geometric>,
    pub erase: EraseRect,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

/// Rectangle covering a fraction of the image area drawn from `fraction`,
/// with the realised integer-pixel fraction also inside that range.
pub fn sample_erase_rect<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    fraction: (f64, f64),
    rng: &mut R,
) -> EraseRect {
    let area = (width * height) as f64;
    let (lo, hi) = fraction;
    for _ in 0..100 {
        let target = rng.random_range(lo..=hi) * area;
        let aspect: f64 = rng.random_range(0.3..=1.0 / 0.3);
        let h = ((target * aspect).sqrt().round() as usize).clamp(1, height);
        let w = ((target / h as f64).round() as usize).clamp(1, width);
        let realised = (w * h) as f64 / area;
        if realised >= lo && realised <= hi {
            let x = rng.random_range(0..=width - w);
            let y = rng.random_range(0..=height - h);
            return EraseRect {
                x,
                y,
                width: w,
                height: h,
            };
        }
    }
    // Full-width band with the smallest admissible height.
    let h = ((lo * height as f64).ceil() as usize).clamp(1, height);
    let y = rng.random_range(0..=height - h);
    EraseRect {
        x: 0,
        y,
        width,
        height: h,
    }
}

fn bilinear(img: &RgbImage, c: usize, fx: f64, fy: f64) -> f64 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = fx.floor();
    let y0 = fy.floor();
    let (dx, dy) = (fx - x0, fy - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let sample = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.get(c, x as usize, y as usize)
        }
    };
    sample(x0, y0) * (1.0 - dx) * (1.0 - dy)
        + sample(x0 + 1, y0) * dx * (1.0 - dy)
        + sample(x0, y0 + 1) * (1.0 - dx) * dy
        + sample(x0 + 1, y0 + 1) * dx * dy
}

/// Resamples through an inverse map from output to source coordinates.
fn warp(img: &RgbImage, inverse: impl Fn(f64, f64) -> (f64, f64)) -> RgbImage {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (sx, sy) = inverse(x as f64, y as f64);
            for c in 0..3 {
                out.set(c, x, y, bilinear(img, c, sx, sy));
            }
        }
    }
    out
}

fn rotate(img: &RgbImage, degrees: f64) -> RgbImage {
    let (cx, cy) = ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    warp(img, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + c * dx + s * dy, cy - s * dx + c * dy)
    })
}

fn apply_geometric(img: &RgbImage, op: Geometric) -> RgbImage {
    let cy = (img.height() as f64 - 1.0) / 2.0;
    match op {
        Geometric::Shear(k) => warp(img, |x, y| (x - k * (y - cy), y)),
        Geometric::Translate(tx, ty) => {
            let (ox, oy) = (tx * img.width() as f64, ty * img.height() as f64);
            warp(img, |x, y| (x - ox, y - oy))
        }
    }
}

fn jitter(img: &mut RgbImage, brightness: f64, contrast: f64, saturation: f64) {
    let n = img.pixels();
    for c in 0..3 {
        for v in img.plane_mut(c) {
            *v = (*v * brightness).clamp(0.0, 1.0);
        }
    }
    let luma_at = |img: &RgbImage, i: usize| -> f64 { (0..3).map(|c| LUMA[c] * img.plane(c)[i]).sum() };
    let mean_luma = (0..n).map(|i| luma_at(img, i)).sum::<f64>() / n as f64;
    for c in 0..3 {
        for v in img.plane_mut(c) {
            *v = (mean_luma + contrast * (*v - mean_luma)).clamp(0.0, 1.0);
        }
    }
    let lumas: Vec<f64> = (0..n).map(|i| luma_at(img, i)).collect();
    for c in 0..3 {
        for (v, l) in img.plane_mut(c).iter_mut().zip(&lumas) {
            *v = (l + saturation * (*v - l)).clamp(0.0, 1.0);
        }
    }
}

/// Runs the flip / rotate / (geometric) / erase / jitter pipeline.
pub fn augment_traced<R: Rng + ?Sized>(
    img: &RgbImage,
    ranges: &AugmentRanges,
    rng: &mut R,
) -> (RgbImage, AugmentTrace) {
    let flipped = rng.random_bool(0.5);
    let mut out = if flipped { img.flip_horizontal() } else { img.clone() };

    let rotation_deg = rng.random_range(0.0..=ranges.max_rotation_deg);
    out = rotate(&out, rotation_deg);

    let geometric = ranges.geometric.map(|m| {
        if rng.random_bool(0.5) {
            Geometric::Shear(rng.random_range(-m..=m))
        } else {
            Geometric::Translate(rng.random_range(-m..=m), rng.random_range(-m..=m))
        }
    });
    if let Some(op) = geometric {
        out = apply_geometric(&out, op);
    }

    let erase = sample_erase_rect(out.width(), out.height(), ranges.erase_fraction, rng);
    for y in erase.y..erase.y + erase.height {
        for x in erase.x..erase.x + erase.width {
            for c in 0..3 {
                let v = rng.random::<f64>();
                out.set(c, x, y, v);
            }
        }
    }

    let (lo, hi) = ranges.jitter;
    let brightness = rng.random_range(lo..=hi);
    let contrast = rng.random_range(lo..=hi);
    let saturation = rng.random_range(lo..=hi);
    jitter(&mut out, brightness, contrast, saturation);

    let trace = AugmentTrace {
        flipped,
        rotation_deg,
        geometric,
        erase,
        brightness,
        contrast,
        saturation,
    };
    (out, trace)
}

pub fn weak_augment(img: &RgbImage, spec: &PerturbSpec) -> Result<RgbImage> {
    if spec.mode != PerturbMode::Weak {
        return Err(Error::Contract(format!("weak_augment given {:?} spec", spec.mode)));
    }
    Ok(augment_traced(img, &AugmentRanges::WEAK, &mut spec.rng()).0)
}

pub fn strong_augment(img: &RgbImage, spec: &PerturbSpec) -> Result<RgbImage> {
    if spec.mode != PerturbMode::Strong {
        return Err(Error::Contract(format!("strong_augment given {:?} spec", spec.mode)));
    }
    Ok(augment_traced(img, &AugmentRanges::STRONG, &mut spec.rng()).0)
}
