use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::checkpoint::Checkpoint;
use crate::data::{analytic_sdf, boundary_samples, Dataset, GtAccess, Sample};
use crate::error::{Error, Result};
use crate::metrics::{compare, MetricsReport, Reference, SdfGrid, SurfaceSamples};
use crate::model::{AnalyticModel, SdfModel, SdfNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Held-out labeled samples.
    Val,
    /// Unlabeled samples; needs their ground truth in the file.
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn indices(self, dataset: &Dataset, val_fraction: f64) -> Vec<usize> {
        let s = dataset.splits(val_fraction);
        match self {
            Split::Val => s.val,
            Split::Test => s.unlabeled,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (expected val or test)"))),
        }
    }
}

/// Arc-length spacing of the exact reference boundary samples.
pub const REFERENCE_SPACING: f64 = 2e-3;

/// Samples with their reference surfaces, built once.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub indices: Vec<usize>,
    pub references: Vec<Reference>,
    pub grid: usize,
}

impl EvalSet {
    pub fn new(dataset: &Dataset, indices: Vec<usize>, grid: usize) -> Result<Self> {
        let references = indices
            .iter()
            .map(|&i| {
                let gt = dataset.samples[i].ground_truth(GtAccess::Evaluation)?;
                let occupancy = if gt.occupancy.resolution == grid {
                    gt.occupancy.clone()
                } else {
                    SdfGrid::from_fn(grid, |p| analytic_sdf(&gt.shape, p))?.occupancy()
                };
                let (points, normals) = boundary_samples(&gt.shape, REFERENCE_SPACING);
                Reference::from_surface(SurfaceSamples { points, normals }, occupancy)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            indices,
            references,
            grid,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Metrics of `predict`'s grid for every sample, in index order.
    pub fn evaluate_with<F>(&self, dataset: &Dataset, mut predict: F) -> Result<EvalResult>
    where
        F: FnMut(&Sample, usize) -> Result<SdfGrid>,
    {
        let rows = self
            .indices
            .iter()
            .zip(&self.references)
            .map(|(&i, reference)| {
                let grid = predict(&dataset.samples[i], self.grid)?;
                Ok((i, compare(&grid, reference)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = MetricsReport::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        Ok(EvalResult { rows, mean })
    }

    pub fn evaluate_model<M: SdfModel + ?Sized>(&self, dataset: &Dataset, model: &M) -> Result<EvalResult> {
        self.evaluate_with(dataset, |s, g| SdfGrid::from_model(model, &s.image, g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// `(sample index, metrics)`.
    pub rows: Vec<(usize, MetricsReport)>,
    /// `None` for an empty split.
    pub mean: Option<MetricsReport>,
}

impl EvalResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample", "chamfer_x100", "iou_pct", "fscore_pct", "nc"])?;
        let fields = |m: &MetricsReport| {
            [m.chamfer_x100, m.iou_pct, m.fscore_pct, m.normal_consistency].map(|v| v.to_string())
        };
        for (i, m) in &self.rows {
            let mut rec = vec![i.to_string()];
            rec.extend(fields(m));
            w.write_record(&rec)?;
        }
        if let Some(m) = &self.mean {
            let mut rec = vec!["mean".to_owned()];
            rec.extend(fields(m));
            w.write_record(&rec)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Evaluate a checkpoint on one split.
pub fn evaluate(ckpt: &Checkpoint, dataset: &Dataset, split: Split, val_fraction: f64, grid: usize) -> Result<EvalResult> {
    let net = SdfNet::new(ckpt.spec.clone(), ckpt.params()?)?;
    let set = EvalSet::new(dataset, split.indices(dataset, val_fraction), grid)?;
    set.evaluate_model(dataset, &net)
}

/// Evaluate the exact SDF of every sample's own shape; the discretization floor.
pub fn evaluate_oracle(dataset: &Dataset, split: Split, val_fraction: f64, grid: usize) -> Result<EvalResult> {
    let set = EvalSet::new(dataset, split.indices(dataset, val_fraction), grid)?;
    set.evaluate_with(dataset, |s, g| {
        let oracle = AnalyticModel {
            shape: s.ground_truth(GtAccess::Evaluation)?.shape,
        };
        SdfGrid::from_model(&oracle, &s.image, g)
    })
}
