//! Procedural single-view dataset and its on-disk container.
//!
//! File layout: bincode-encoded [`Dataset`], i.e. a header
//! `{format, version, n, labeled_fraction, seed, height, width, grid, n_queries}`
//! followed by the per-sample records. Ground truth of a sample is optional in
//! the file so that unlabeled ground truth can be physically removed.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{render, Image};
use super::shape::{analytic_sdf, Shape};
use crate::error::{Error, Result};
use crate::geometry::Point2;

pub const DATASET_FORMAT: &str = "semisdf-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n: usize,
    pub labeled_fraction: f64,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub grid: usize,
    pub n_queries: usize,
    /// Fraction of query points drawn near the boundary rather than uniformly.
    pub near_surface_fraction: f64,
    pub near_surface_sigma: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            labeled_fraction: 0.10,
            seed: 0,
            height: 32,
            width: 32,
            grid: 64,
            n_queries: 64,
            near_surface_fraction: 0.5,
            near_surface_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub labeled_fraction: f64,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub grid: usize,
    pub n_queries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub point: Point2,
    pub sdf: f64,
}

/// `resolution x resolution` inside/outside flags sampled at cell centers
/// `((i + 0.5) / G, (j + 0.5) / G)`, row-major with rows along `y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub resolution: usize,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn from_fn(resolution: usize, mut inside: impl FnMut(Point2) -> bool) -> Self {
        let mut cells = Vec::with_capacity(resolution * resolution);
        for iy in 0..resolution {
            for ix in 0..resolution {
                cells.push(inside(grid_point(ix, iy, resolution)));
            }
        }
        Self { resolution, cells }
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.resolution + ix]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Cell-center coordinates of grid node `(ix, iy)`.
pub fn grid_point(ix: usize, iy: usize, resolution: usize) -> Point2 {
    let g = resolution as f64;
    Point2::new((ix as f64 + 0.5) / g, (iy as f64 + 0.5) / g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub shape: Shape,
    pub queries: Vec<Query>,
    pub occupancy: OccupancyGrid,
}

impl GroundTruth {
    pub fn query_points(&self) -> Vec<Point2> {
        self.queries.iter().map(|q| q.point).collect()
    }

    pub fn query_sdf(&self) -> Vec<f64> {
        self.queries.iter().map(|q| q.sdf).collect()
    }
}

/// Who is asking for ground truth. Training code may only see labeled
/// samples' ground truth; evaluation may see everything still in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtAccess {
    Training,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub image: Image,
    pub labeled: bool,
    gt: Option<GroundTruth>,
}

impl Sample {
    pub fn new(index: usize, image: Image, labeled: bool, gt: Option<GroundTruth>) -> Self {
        Self {
            index,
            image,
            labeled,
            gt,
        }
    }

    pub fn ground_truth(&self, access: GtAccess) -> Result<&GroundTruth> {
        if access == GtAccess::Training && !self.labeled {
            return Err(Error::HiddenGroundTruth(self.index));
        }
        self.gt.as_ref().ok_or(Error::HiddenGroundTruth(self.index))
    }

    pub fn has_ground_truth(&self) -> bool {
        self.gt.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

/// Index lists into `Dataset::samples`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train_labeled: Vec<usize>,
    pub val: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl Dataset {
    pub fn labeled_count(&self) -> usize {
        self.samples.iter().filter(|s| s.labeled).count()
    }

    /// Hold out `round(val_fraction * n_labeled)` labeled samples (at least
    /// one when two or more are labeled) for validation.
    pub fn splits(&self, val_fraction: f64) -> Splits {
        let labeled: Vec<usize> = self
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.labeled)
            .map(|(i, _)| i)
            .collect();
        let n_val = if labeled.len() >= 2 {
            ((labeled.len() as f64 * val_fraction).round() as usize).clamp(1, labeled.len() - 1)
        } else {
            0
        };
        Splits {
            val: labeled[..n_val].to_vec(),
            train_labeled: labeled[n_val..].to_vec(),
            unlabeled: self
                .samples
                .iter()
                .enumerate()
                .filter(|(_, s)| !s.labeled)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// Drop ground truth of every unlabeled sample.
    pub fn strip_unlabeled_gt(&mut self) {
        for s in self.samples.iter_mut().filter(|s| !s.labeled) {
            s.gt = None;
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        bincode::serialize_into(w, self).map_err(|e| Error::Format {
            path: path.to_owned(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let ds: Dataset = bincode::deserialize_from(r).map_err(|e| Error::Format {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        if ds.header.format != DATASET_FORMAT || ds.header.version != DATASET_VERSION {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: format!("unsupported dataset {} v{}", ds.header.format, ds.header.version),
            });
        }
        if ds.samples.len() != ds.header.n {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: format!("header says {} samples, found {}", ds.header.n, ds.samples.len()),
            });
        }
        Ok(ds)
    }
}

/// Generate `cfg.n` samples of which exactly `round(n * labeled_fraction)`
/// are labeled. Everything is a function of `cfg.seed`.
pub fn gen_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.n < 10 {
        return Err(Error::Config(format!("dataset needs n >= 10, got {}", cfg.n)));
    }
    if !(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "labeled_fraction must lie in (0, 1], got {}",
            cfg.labeled_fraction
        )));
    }
    if cfg.grid < 8 {
        return Err(Error::Config(format!("grid resolution must be >= 8, got {}", cfg.grid)));
    }
    if cfg.n_queries == 0 {
        return Err(Error::Config("n_queries must be positive".into()));
    }
    let n_labeled = ((cfg.n as f64 * cfg.labeled_fraction).round() as usize).min(cfg.n);
    let mut order: Vec<usize> = (0..cfg.n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let mut labeled = vec![false; cfg.n];
    for &i in &order[..n_labeled] {
        labeled[i] = true;
    }

    let samples = (0..cfg.n)
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let shape = Shape::random(&mut rng);
            let image = render(&shape, cfg.height, cfg.width)?;
            let queries = gen_queries(&shape, cfg, &mut rng);
            let occupancy = OccupancyGrid::from_fn(cfg.grid, |p| analytic_sdf(&shape, p) < 0.0);
            Ok(Sample::new(
                i,
                image,
                labeled[i],
                Some(GroundTruth {
                    shape,
                    queries,
                    occupancy,
                }),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        header: DatasetHeader {
            format: DATASET_FORMAT.to_owned(),
            version: DATASET_VERSION,
            n: cfg.n,
            labeled_fraction: cfg.labeled_fraction,
            seed: cfg.seed,
            height: cfg.height,
            width: cfg.width,
            grid: cfg.grid,
            n_queries: cfg.n_queries,
        },
        samples,
    })
}

/// Independent stream per sample so samples can be generated in any order.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn gen_queries<R: Rng + ?Sized>(shape: &Shape, cfg: &DatasetConfig, rng: &mut R) -> Vec<Query> {
    let n_near = (cfg.n_queries as f64 * cfg.near_surface_fraction).round() as usize;
    let normal = Normal::new(0.0, cfg.near_surface_sigma.max(1e-12)).expect("valid sigma");
    let mut queries = Vec::with_capacity(cfg.n_queries);
    for k in 0..cfg.n_queries {
        let uniform = Point2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let point = if k < n_near {
            let on_surface = project_to_boundary(shape, uniform);
            let jitter = Point2::new(normal.sample(rng), normal.sample(rng));
            let p = on_surface + jitter;
            Point2::new(p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0))
        } else {
            uniform
        };
        queries.push(Query {
            point,
            sdf: analytic_sdf(shape, point),
        });
    }
    queries
}

/// Closest boundary point, by stepping along the numerical SDF gradient.
fn project_to_boundary(shape: &Shape, p: Point2) -> Point2 {
    let h = 1e-6;
    let mut q = p;
    for _ in 0..4 {
        let d = analytic_sdf(shape, q);
        let gx = analytic_sdf(shape, q + Point2::new(h, 0.0)) - analytic_sdf(shape, q - Point2::new(h, 0.0));
        let gy = analytic_sdf(shape, q + Point2::new(0.0, h)) - analytic_sdf(shape, q - Point2::new(0.0, h));
        let g = Point2::new(gx, gy) * (1.0 / (2.0 * h));
        let n = g.norm();
        if n < 1e-9 {
            break;
        }
        q = q - g * (d / (n * n));
    }
    q
}
