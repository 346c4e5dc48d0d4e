//! Reconstruction quality: Chamfer distance, IoU, F-score and normal
//! consistency between predicted and reference zero contours.

mod contour;
mod nearest;

pub use contour::{extract_isocontour, grid_points, SdfGrid, SurfaceSamples, MIN_GRID};
pub use nearest::{brute_force_nearest, NearestIndex};

use serde::{Deserialize, Serialize};

use crate::data::OccupancyGrid;
use crate::error::{Error, Result};

/// Chamfer reported for an empty predicted surface: the unit-square diagonal, x100.
pub const WORST_CHAMFER_X100: f64 = std::f64::consts::SQRT_2 * 100.0;

/// F-score threshold as a fraction of the reference bounding-box diagonal.
pub const FSCORE_FRACTION: f64 = 0.01;

fn require_nonempty(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("metric on an empty point set".into()));
    }
    Ok(())
}

fn nearest_distances(from: &SurfaceSamples, to: &SurfaceSamples) -> Vec<(usize, f64)> {
    let index = NearestIndex::new(&to.points);
    from.points
        .iter()
        .map(|&p| index.nearest(p).expect("nonempty target"))
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// `0.5 (mean_a d(a, B) + mean_b d(b, A))`, unscaled.
pub fn chamfer_l1(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<f64> {
    require_nonempty(a, b)?;
    let ab = mean(nearest_distances(a, b).into_iter().map(|(_, d)| d));
    let ba = mean(nearest_distances(b, a).into_iter().map(|(_, d)| d));
    Ok(0.5 * (ab + ba))
}

/// Percent intersection over union of the inside regions; 100 when both are empty.
pub fn iou(pred: &SdfGrid, gt: &OccupancyGrid) -> Result<f64> {
    iou_occupancy(&pred.occupancy(), gt)
}

pub fn iou_occupancy(pred: &OccupancyGrid, gt: &OccupancyGrid) -> Result<f64> {
    if pred.resolution != gt.resolution || pred.cells.len() != gt.cells.len() {
        return Err(Error::Shape(format!(
            "occupancy resolutions differ: {} vs {}",
            pred.resolution, gt.resolution
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.cells.iter().zip(&gt.cells) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        100.0
    } else {
        100.0 * inter as f64 / union as f64
    })
}

/// Percent harmonic mean of precision (A near B) and recall (B near A).
pub fn fscore(a: &SurfaceSamples, b: &SurfaceSamples, threshold: f64) -> Result<f64> {
    require_nonempty(a, b)?;
    let frac = |d: Vec<(usize, f64)>| d.iter().filter(|(_, x)| *x <= threshold).count() as f64 / d.len() as f64;
    let precision = frac(nearest_distances(a, b));
    let recall = frac(nearest_distances(b, a));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

/// One percent of the reference surface's bounding-box diagonal.
pub fn fscore_threshold(reference: &SurfaceSamples) -> Result<f64> {
    let (lo, hi) = reference
        .bounding_box()
        .ok_or_else(|| Error::Precondition("threshold of an empty surface".into()))?;
    Ok(FSCORE_FRACTION * lo.dist(hi))
}

/// Mean `|cos|` between each normal and its nearest counterpart's, averaged
/// over both directions.
pub fn normal_consistency(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<f64> {
    require_nonempty(a, b)?;
    if a.normals.len() != a.len() || b.normals.len() != b.len() {
        return Err(Error::Shape("surface normals do not match points".into()));
    }
    let one_way = |from: &SurfaceSamples, to: &SurfaceSamples| {
        mean(
            nearest_distances(from, to)
                .into_iter()
                .zip(&from.normals)
                .map(|((j, _), n)| n.dot(to.normals[j]).abs().min(1.0)),
        )
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub chamfer_x100: f64,
    pub iou_pct: f64,
    pub fscore_pct: f64,
    pub normal_consistency: f64,
}

impl MetricsReport {
    pub fn worst_case() -> Self {
        Self {
            chamfer_x100: WORST_CHAMFER_X100,
            iou_pct: 0.0,
            fscore_pct: 0.0,
            normal_consistency: 0.0,
        }
    }

    /// Per-field mean; `None` for an empty list.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let m = |f: fn(&MetricsReport) -> f64| mean(reports.iter().map(f));
        Some(MetricsReport {
            chamfer_x100: m(|r| r.chamfer_x100),
            iou_pct: m(|r| r.iou_pct),
            fscore_pct: m(|r| r.fscore_pct),
            normal_consistency: m(|r| r.normal_consistency),
        })
    }
}

/// Reference surface plus occupancy, reusable across evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub surface: SurfaceSamples,
    pub occupancy: OccupancyGrid,
    pub fscore_threshold: f64,
}

impl Reference {
    pub fn new(grid: &SdfGrid, occupancy: OccupancyGrid) -> Result<Self> {
        Self::from_surface(extract_isocontour(grid)?, occupancy)
    }

    pub fn from_surface(surface: SurfaceSamples, occupancy: OccupancyGrid) -> Result<Self> {
        let fscore_threshold = fscore_threshold(&surface)?;
        Ok(Self {
            surface,
            occupancy,
            fscore_threshold,
        })
    }
}

/// All four metrics for one prediction. An empty predicted surface scores
/// [`MetricsReport::worst_case`].
pub fn compare(pred: &SdfGrid, reference: &Reference) -> Result<MetricsReport> {
    let surface = match extract_isocontour(pred) {
        Ok(s) => s,
        Err(Error::EmptySurface) => return Ok(MetricsReport::worst_case()),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        chamfer_x100: 100.0 * chamfer_l1(&surface, &reference.surface)?,
        iou_pct: iou(pred, &reference.occupancy)?,
        fscore_pct: fscore(&surface, &reference.surface, reference.fscore_threshold)?,
        normal_consistency: normal_consistency(&surface, &reference.surface)?,
    })
}
