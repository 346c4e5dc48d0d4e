//! Image-conditioned SDF predictors.
//!
//! The task network is a plain MLP whose input is the average-pooled image
//! (`cells x cells x 4`, centered on gray) followed by per-query features:
//! the query point (centered on the image middle) and a small patch of image
//! contrast sampled around it. The pooled image is shared by every query of
//! one image, which [`InputBatch`] exploits.

use rand::Rng;

use crate::data::image::{ContrastMap, FEATURES_PER_CELL};
use crate::data::{analytic_sdf, Image, Shape};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::nnet::{forward_batch, Activation, InputBatch, NetworkSpec, ParamVector};

pub const DEFAULT_FEATURE_CELLS: usize = 8;

/// Anything that maps an image and query points to signed distances.
pub trait SdfModel {
    fn predict(&self, image: &Image, points: &[Point2]) -> Result<Vec<f64>>;
}

/// Side of the square contrast patch sampled around each query.
pub const PATCH_SIDE: usize = 5;
/// Patch tap spacing in unit-square coordinates.
pub const PATCH_SPACING: f64 = 0.05;
/// Per-query input width: centered point plus the contrast patch.
pub const QUERY_FEATURES: usize = 2 + PATCH_SIDE * PATCH_SIDE;

/// Input width for a network reading `cells x cells` pooled features plus
/// the per-query features.
pub fn input_dim_for(cells: usize) -> usize {
    cells * cells * FEATURES_PER_CELL + QUERY_FEATURES
}

/// ReLU hidden layers, identity output, sized for the pooled-image encoding.
pub fn sdf_network_spec(cells: usize, hidden: &[usize], seed: u64) -> NetworkSpec {
    let mut sizes = vec![input_dim_for(cells)];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    NetworkSpec::mlp(&sizes, Activation::Relu, Activation::Identity, seed)
}

/// Pooling resolution implied by a network's input width.
pub fn feature_cells(spec: &NetworkSpec) -> Result<usize> {
    let n = spec.input_dim();
    if n > QUERY_FEATURES && (n - QUERY_FEATURES) % FEATURES_PER_CELL == 0 {
        let cells = (((n - QUERY_FEATURES) / FEATURES_PER_CELL) as f64).sqrt().round() as usize;
        if cells > 0 && input_dim_for(cells) == n {
            return Ok(cells);
        }
    }
    Err(Error::Config(format!(
        "network input width {n} is not cells^2 * {FEATURES_PER_CELL} + {QUERY_FEATURES}"
    )))
}

/// `n` stratified random points in the unit square: one jittered point per
/// cell of a `ceil(sqrt(n))` grid, cells taken in row-major order.
pub fn probe_points<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Point2> {
    let k = (n as f64).sqrt().ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let (cx, cy) = ((i % k) as f64, (i / k) as f64);
            Point2::new(
                (cx + rng.random_range(0.0..1.0)) / k as f64,
                (cy + rng.random_range(0.0..1.0)) / k as f64,
            )
        })
        .collect()
}

/// Per-query input row for point `p`, appended to `row`.
pub fn push_query_features(contrast: &ContrastMap, p: Point2, row: &mut Vec<f64>) {
    row.extend([p.x - 0.5, p.y - 0.5]);
    let half = (PATCH_SIDE / 2) as f64;
    for i in 0..PATCH_SIDE {
        for j in 0..PATCH_SIDE {
            let o = Point2::new((j as f64 - half) * PATCH_SPACING, (i as f64 - half) * PATCH_SPACING);
            row.push(contrast.sample(p + o));
        }
    }
}

fn query_rows(image: &Image, points: impl Iterator<Item = Point2>) -> Vec<f64> {
    let contrast = image.contrast_map();
    let mut rows = Vec::with_capacity(points.size_hint().0 * QUERY_FEATURES);
    for p in points {
        push_query_features(&contrast, p, &mut rows);
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfNet {
    pub spec: NetworkSpec,
    pub params: ParamVector,
    cells: usize,
}

impl SdfNet {
    pub fn new(spec: NetworkSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        params.check_matches(&spec)?;
        if spec.output_dim() != 1 {
            return Err(Error::Config(format!(
                "SDF network must have one output, got {}",
                spec.output_dim()
            )));
        }
        let cells = feature_cells(&spec)?;
        Ok(Self { spec, params, cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// One row per query point, image features shared.
    pub fn input_batch(&self, image: &Image, points: &[Point2]) -> Result<InputBatch> {
        let rows = query_rows(image, points.iter().copied());
        InputBatch::with_shared(image.pooled_features(self.cells), rows, QUERY_FEATURES)
    }

    /// Four rows per point at `p +- h ex`, `p +- h ey`, for the eikonal term.
    pub fn stencil_batch(&self, image: &Image, points: &[Point2], h: f64) -> Result<InputBatch> {
        let offsets = [
            Point2::new(h, 0.0),
            Point2::new(-h, 0.0),
            Point2::new(0.0, h),
            Point2::new(0.0, -h),
        ];
        let rows = query_rows(image, points.iter().flat_map(|&p| offsets.iter().map(move |&o| p + o)));
        InputBatch::with_shared(image.pooled_features(self.cells), rows, QUERY_FEATURES)
    }
}

impl SdfModel for SdfNet {
    fn predict(&self, image: &Image, points: &[Point2]) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let batch = self.input_batch(image, points)?;
        forward_batch(&self.params, &self.spec, &batch)
    }
}

/// Returns the exact SDF of a known shape, ignoring the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticModel {
    pub shape: Shape,
}

impl SdfModel for AnalyticModel {
    fn predict(&self, _image: &Image, points: &[Point2]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|&p| analytic_sdf(&self.shape, p)).collect())
    }
}
