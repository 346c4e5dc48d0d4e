//! Synthetic single-view SDF data: shapes, rendering, augmentation, datasets.

pub mod augment;
pub mod dataset;
pub mod image;
pub mod shape;

pub use augment::{apply_strong, apply_weak, strong_augment, weak_augment, Augmented, StrongParams, WeakParams};
pub use dataset::{gen_dataset, grid_point, Dataset, DatasetConfig, GroundTruth, GtAccess, OccupancyGrid, Query, Sample, Splits};
pub use image::{render, Image};
pub use shape::{analytic_sdf, boundary_samples, Shape, ShapeKind};
