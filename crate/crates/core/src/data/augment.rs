//! Weak and strong image augmentations.
//!
//! Weak: brightness/contrast within 10%, rotation within 20 degrees, light
//! gaussian noise. Strong: per-channel color shifts within 40%, hue rotation
//! within 30 degrees, 3x3 gaussian blur, 1-4 random erasing blocks and white
//! noise. Every output is clamped to `[0, 1]`.
//!
//! Rotation moves image content, so [`Augmented::map_point`] maps a query
//! point from the source frame into the augmented frame; predictions made at
//! mapped points are comparable across augmentations.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::image::{hsv_to_rgb, rgb_to_hsv, Image, BACKGROUND};
use crate::geometry::Point2;

pub const WEAK_COLOR_RANGE: f64 = 0.10;
pub const WEAK_MAX_ROTATION: f64 = 20.0 * PI / 180.0;
pub const WEAK_MAX_NOISE: f64 = 0.02;

pub const STRONG_COLOR_RANGE: f64 = 0.40;
pub const STRONG_MAX_HUE: f64 = 30.0 / 360.0;
pub const STRONG_BLUR_SIGMA: (f64, f64) = (0.5, 1.5);
pub const STRONG_BLOCKS: (usize, usize) = (1, 4);
pub const STRONG_BLOCK_AREA: (f64, f64) = (0.02, 0.10);
pub const STRONG_MAX_NOISE: f64 = 0.08;

const ROTATION_CENTER: Point2 = Point2::new(0.5, 0.5);

/// Augmented image plus the geometric transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub image: Image,
    /// Content rotation in radians about the image center.
    pub rotation: f64,
}

impl Augmented {
    pub fn identity(image: &Image) -> Self {
        Self {
            image: image.clone(),
            rotation: 0.0,
        }
    }

    /// Where source-frame point `p` ends up in the augmented image.
    pub fn map_point(&self, p: Point2) -> Point2 {
        if self.rotation == 0.0 {
            p
        } else {
            p.rotate_about(ROTATION_CENTER, self.rotation)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakParams {
    pub brightness: f64,
    pub contrast: f64,
    pub rotation: f64,
    pub noise_sigma: f64,
}

impl WeakParams {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            rotation: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            brightness: 1.0 + rng.random_range(-WEAK_COLOR_RANGE..=WEAK_COLOR_RANGE),
            contrast: 1.0 + rng.random_range(-WEAK_COLOR_RANGE..=WEAK_COLOR_RANGE),
            rotation: rng.random_range(-WEAK_MAX_ROTATION..=WEAK_MAX_ROTATION),
            noise_sigma: rng.random_range(0.0..=WEAK_MAX_NOISE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EraseBlock {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongParams {
    pub channel_gain: [f64; 3],
    /// Hue rotation as a fraction of a full turn.
    pub hue_shift: f64,
    pub blur_sigma: f64,
    pub blocks: Vec<EraseBlock>,
    pub noise_sigma: f64,
}

impl StrongParams {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> Self {
        let channel_gain =
            [(); 3].map(|_| 1.0 + rng.random_range(-STRONG_COLOR_RANGE..=STRONG_COLOR_RANGE));
        let hue_shift = rng.random_range(-STRONG_MAX_HUE..=STRONG_MAX_HUE);
        let blur_sigma = rng.random_range(STRONG_BLUR_SIGMA.0..=STRONG_BLUR_SIGMA.1);
        let n_blocks = rng.random_range(STRONG_BLOCKS.0..=STRONG_BLOCKS.1);
        let total = (height * width) as f64;
        let blocks = (0..n_blocks)
            .map(|_| {
                let area = rng.random_range(STRONG_BLOCK_AREA.0..=STRONG_BLOCK_AREA.1) * total;
                let aspect: f64 = rng.random_range(0.5..=2.0);
                let bh = ((area * aspect).sqrt().round() as usize).clamp(1, height);
                let bw = ((area / bh as f64).round() as usize).clamp(1, width);
                EraseBlock {
                    row: rng.random_range(0..=height - bh),
                    col: rng.random_range(0..=width - bw),
                    height: bh,
                    width: bw,
                }
            })
            .collect();
        let noise_sigma = rng.random_range(0.0..=STRONG_MAX_NOISE);
        Self {
            channel_gain,
            hue_shift,
            blur_sigma,
            blocks,
            noise_sigma,
        }
    }
}

pub fn weak_augment<R: Rng + ?Sized>(image: &Image, rng: &mut R) -> Augmented {
    let params = WeakParams::sample(rng);
    apply_weak(image, &params, rng)
}

pub fn strong_augment<R: Rng + ?Sized>(image: &Image, rng: &mut R) -> Augmented {
    let params = StrongParams::sample(rng, image.height(), image.width());
    apply_strong(image, &params, rng)
}

/// `rng` is only consumed for noise when `noise_sigma > 0`.
pub fn apply_weak<R: Rng + ?Sized>(image: &Image, params: &WeakParams, rng: &mut R) -> Augmented {
    let mut img = image.clone();
    if params.brightness != 1.0 {
        img.map_values(|v| v * params.brightness);
    }
    if params.contrast != 1.0 {
        let mean = img.mean();
        img.map_values(|v| (v - mean) * params.contrast + mean);
    }
    if params.rotation != 0.0 {
        img = rotate(&img, params.rotation);
    }
    add_noise(&mut img, params.noise_sigma, rng);
    img.clamp_unit();
    Augmented {
        image: img,
        rotation: params.rotation,
    }
}

pub fn apply_strong<R: Rng + ?Sized>(image: &Image, params: &StrongParams, rng: &mut R) -> Augmented {
    let mut img = image.clone();
    let (h, w) = (img.height(), img.width());
    for r in 0..h {
        for c in 0..w {
            let mut rgb = img.rgb(r, c);
            for (v, g) in rgb.iter_mut().zip(params.channel_gain) {
                *v = (*v * g).clamp(0.0, 1.0);
            }
            if params.hue_shift != 0.0 {
                let mut hsv = rgb_to_hsv(rgb);
                hsv[0] += params.hue_shift;
                rgb = hsv_to_rgb(hsv);
            }
            img.set_rgb(r, c, rgb);
        }
    }
    if params.blur_sigma > 0.0 {
        img = blur3(&img, params.blur_sigma);
    }
    for b in &params.blocks {
        for r in b.row..(b.row + b.height).min(h) {
            for c in b.col..(b.col + b.width).min(w) {
                let rgb = [(); 3].map(|_| rng.random_range(0.0..1.0));
                img.set_rgb(r, c, rgb);
            }
        }
    }
    add_noise(&mut img, params.noise_sigma, rng);
    img.clamp_unit();
    Augmented {
        image: img,
        rotation: 0.0,
    }
}

/// Bilinear resampling; uncovered pixels take the background gray.
fn rotate(img: &Image, angle: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = Image::filled(h, w, BACKGROUND);
    for r in 0..h {
        for c in 0..w {
            let q = Point2::new((c as f64 + 0.5) / w as f64, (r as f64 + 0.5) / h as f64);
            let src = q.rotate_about(ROTATION_CENTER, -angle);
            let (x, y) = (src.x * w as f64, src.y * h as f64);
            for ch in 0..3 {
                out.set(r, c, ch, img.sample_bilinear(x, y, ch));
            }
        }
    }
    out
}

/// 3x3 gaussian blur with clamp-to-edge borders.
fn blur3(img: &Image, sigma: f64) -> Image {
    let k1 = (-1.0 / (2.0 * sigma * sigma)).exp();
    let k = [k1, 1.0, k1];
    let norm: f64 = k.iter().sum::<f64>().powi(2);
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (dr, kr) in k.iter().enumerate() {
                    let rr = (r + dr).saturating_sub(1).min(h - 1);
                    for (dc, kc) in k.iter().enumerate() {
                        let cc = (c + dc).saturating_sub(1).min(w - 1);
                        acc += kr * kc * img.get(rr, cc, ch);
                    }
                }
                out.set(r, c, ch, acc / norm);
            }
        }
    }
    out
}

fn add_noise<R: Rng + ?Sized>(img: &mut Image, sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    img.map_values(|v| v + normal.sample(&mut *rng));
}
