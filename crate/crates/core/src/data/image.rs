use serde::{Deserialize, Serialize};

use super::shape::{analytic_sdf, Shape};
use crate::error::{Error, Result};
use crate::geometry::Point2;

pub const BACKGROUND: f64 = 0.5;
/// Values per pooled cell: RGB means plus the deviation-from-gray channel.
pub const FEATURES_PER_CELL: usize = 4;

/// Row-major `height x width x 3` RGB raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            pixels: vec![value as f32; height * width * 3],
        }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{} pixel values for a {height}x{width}x3 image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.pixels[(row * self.width + col) * 3 + ch] as f64
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.pixels[(row * self.width + col) * 3 + ch] = value as f32;
    }

    pub fn rgb(&self, row: usize, col: usize) -> [f64; 3] {
        [self.get(row, col, 0), self.get(row, col, 1), self.get(row, col, 2)]
    }

    pub fn set_rgb(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        for (ch, v) in rgb.into_iter().enumerate() {
            self.set(row, col, ch, v);
        }
    }

    /// Apply `f` to every channel value.
    pub fn map_values(&mut self, mut f: impl FnMut(f64) -> f64) {
        for v in &mut self.pixels {
            *v = f(*v as f64) as f32;
        }
    }

    pub fn clamp_unit(&mut self) {
        self.map_values(|v| v.clamp(0.0, 1.0));
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Mean absolute per-value difference to `other`.
    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / self.pixels.len() as f64
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer + 0.5); outside the raster returns the background gray.
    pub fn sample_bilinear(&self, x: f64, y: f64, ch: usize) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let fetch = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
                BACKGROUND
            } else {
                self.get(r as usize, c as usize, ch)
            }
        };
        let top = fetch(y0, x0) * (1.0 - tx) + fetch(y0, x0 + 1.0) * tx;
        let bottom = fetch(y0 + 1.0, x0) * (1.0 - tx) + fetch(y0 + 1.0, x0 + 1.0) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Per-pixel largest channel deviation from gray.
    pub fn contrast_map(&self) -> ContrastMap {
        let values = (0..self.height * self.width)
            .map(|i| {
                (0..3)
                    .map(|ch| (f64::from(self.pixels[i * 3 + ch]) - BACKGROUND).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        ContrastMap {
            height: self.height,
            width: self.width,
            values,
        }
    }

    /// Average-pool to `cells x cells x 4`, centered on gray. Per cell: the
    /// three mean channels, then the mean of the largest per-pixel deviation
    /// from gray (a hue-independent foreground cue). Used as the network's
    /// image encoding.
    pub fn pooled_features(&self, cells: usize) -> Vec<f64> {
        let mut out = vec![0.0; cells * cells * FEATURES_PER_CELL];
        let mut counts = vec![0usize; cells * cells];
        for r in 0..self.height {
            let cr = r * cells / self.height;
            for c in 0..self.width {
                let cc = c * cells / self.width;
                let cell = cr * cells + cc;
                counts[cell] += 1;
                let base = cell * FEATURES_PER_CELL;
                let mut dev: f64 = 0.0;
                for ch in 0..3 {
                    let v = self.get(r, c, ch);
                    out[base + ch] += v;
                    dev = dev.max((v - BACKGROUND).abs());
                }
                out[base + 3] += dev;
            }
        }
        for (cell, &n) in counts.iter().enumerate() {
            let base = cell * FEATURES_PER_CELL;
            for k in 0..FEATURES_PER_CELL {
                let v = &mut out[base + k];
                *v = match (n, k) {
                    (0, _) => 0.0,
                    (_, 3) => *v / n as f64,
                    _ => *v / n as f64 - BACKGROUND,
                };
            }
        }
        out
    }
}

/// Single-channel contrast raster; see [`Image::contrast_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ContrastMap {
    /// Bilinear sample at unit-square point `p`; zero (background) outside.
    pub fn sample(&self, p: Point2) -> f64 {
        let fx = p.x * self.width as f64 - 0.5;
        let fy = p.y * self.height as f64 - 0.5;
        let (x0, y0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0, fy - y0);
        let fetch = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
                0.0
            } else {
                self.values[r as usize * self.width + c as usize]
            }
        };
        let top = fetch(y0, x0) * (1.0 - tx) + fetch(y0, x0 + 1.0) * tx;
        let bottom = fetch(y0 + 1.0, x0) * (1.0 - tx) + fetch(y0 + 1.0, x0 + 1.0) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Unit-square coordinates of pixel center `(row, col)`.
pub fn pixel_center(row: usize, col: usize, height: usize, width: usize) -> Point2 {
    Point2::new((col as f64 + 0.5) / width as f64, (row as f64 + 0.5) / height as f64)
}

/// Per-pixel coverage in `[0, 1]`, antialiased from the signed distance at the
/// pixel center over one pixel width.
pub fn coverage(shape: &Shape, height: usize, width: usize) -> Vec<f64> {
    let px = 0.5 * (1.0 / height as f64 + 1.0 / width as f64);
    let mut cov = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let d = analytic_sdf(shape, pixel_center(r, c, height, width));
            cov.push((0.5 - d / px).clamp(0.0, 1.0));
        }
    }
    cov
}

/// Antialiased raster of `shape` in its color over mid-gray.
pub fn render(shape: &Shape, height: usize, width: usize) -> Result<Image> {
    if height < 8 || width < 8 {
        return Err(Error::Config(format!(
            "render needs at least 8x8 pixels, got {height}x{width}"
        )));
    }
    let cov = coverage(shape, height, width);
    let mut img = Image::filled(height, width, BACKGROUND);
    for r in 0..height {
        for c in 0..width {
            let a = cov[r * width + c];
            if a > 0.0 {
                let rgb = shape.color.map(|col| BACKGROUND * (1.0 - a) + col * a);
                img.set_rgb(r, c, rgb);
            }
        }
    }
    Ok(img)
}

/// `h, s, v` all in `[0, 1]`.
pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}
