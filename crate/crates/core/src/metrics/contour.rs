//! SDF grids and marching-squares zero-contour extraction.

use serde::{Deserialize, Serialize};

use crate::data::{grid_point, Image, OccupancyGrid};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::SdfModel;

pub const MIN_GRID: usize = 8;

/// SDF values at the cell centers of a `G x G` grid on the unit square,
/// row-major with rows along `y` (same layout as [`OccupancyGrid`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfGrid {
    resolution: usize,
    values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution < MIN_GRID {
            return Err(Error::Config(format!(
                "SDF grid resolution {resolution} is below {MIN_GRID}"
            )));
        }
        if values.len() != resolution * resolution {
            return Err(Error::Shape(format!(
                "{} values for a {resolution}x{resolution} grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "SDF grid value".into(),
                index: i,
            });
        }
        Ok(Self { resolution, values })
    }

    pub fn from_fn(resolution: usize, mut f: impl FnMut(Point2) -> f64) -> Result<Self> {
        Self::new(resolution, grid_points(resolution).into_iter().map(&mut f).collect())
    }

    /// Evaluate `model` on every grid node in one call.
    pub fn from_model<M: SdfModel + ?Sized>(model: &M, image: &Image, resolution: usize) -> Result<Self> {
        Self::new(resolution, model.predict(image, &grid_points(resolution))?)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution + ix]
    }

    /// Inside where the value is negative.
    pub fn occupancy(&self) -> OccupancyGrid {
        OccupancyGrid {
            resolution: self.resolution,
            cells: self.values.iter().map(|&v| v < 0.0).collect(),
        }
    }

    /// Central-difference gradient at a node, one-sided at the border.
    fn node_gradient(&self, ix: usize, iy: usize) -> Point2 {
        let g = self.resolution;
        let h = 1.0 / g as f64;
        let diff = |lo: f64, hi: f64, span: usize| (hi - lo) / (span as f64 * h);
        let (x0, x1) = (ix.saturating_sub(1), (ix + 1).min(g - 1));
        let (y0, y1) = (iy.saturating_sub(1), (iy + 1).min(g - 1));
        Point2::new(
            diff(self.get(x0, iy), self.get(x1, iy), x1 - x0),
            diff(self.get(ix, y0), self.get(ix, y1), y1 - y0),
        )
    }
}

pub fn grid_points(resolution: usize) -> Vec<Point2> {
    let mut pts = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        for ix in 0..resolution {
            pts.push(grid_point(ix, iy, resolution));
        }
    }
    pts
}

/// Points on the zero level set with unit normals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurfaceSamples {
    pub points: Vec<Point2>,
    pub normals: Vec<Point2>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> Option<(Point2, Point2)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (
                Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
                Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
            )
        }))
    }
}

/// Marching squares on the node lattice: one point per grid edge whose
/// endpoints straddle zero (negative vs nonnegative), placed by linear
/// interpolation. Normals interpolate the node gradients; a vanishing
/// gradient falls back to the edge direction, inside to outside.
pub fn extract_isocontour(grid: &SdfGrid) -> Result<SurfaceSamples> {
    let g = grid.resolution;
    let mut out = SurfaceSamples::default();
    let mut visit = |a: (usize, usize), b: (usize, usize)| {
        let (va, vb) = (grid.get(a.0, a.1), grid.get(b.0, b.1));
        if (va < 0.0) == (vb < 0.0) {
            return;
        }
        let t = va / (va - vb);
        let (pa, pb) = (grid_point(a.0, a.1, g), grid_point(b.0, b.1, g));
        let (ga, gb) = (grid.node_gradient(a.0, a.1), grid.node_gradient(b.0, b.1));
        let mut n = ga * (1.0 - t) + gb * t;
        if !(n.norm() > 1e-12) {
            n = if va < 0.0 { pb - pa } else { pa - pb };
        }
        out.points.push(pa * (1.0 - t) + pb * t);
        out.normals.push(n * (1.0 / n.norm()));
    };
    for iy in 0..g {
        for ix in 0..g {
            if ix + 1 < g {
                visit((ix, iy), (ix + 1, iy));
            }
            if iy + 1 < g {
                visit((ix, iy), (ix, iy + 1));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(out)
}
