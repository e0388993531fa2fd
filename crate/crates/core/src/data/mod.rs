//! Datasets: synthetic stand-in slices, NIfTI volume ingestion, manifests
//! with leakage-free splits, and the on-disk weight map cache.

mod cache;
mod manifest;
mod nifti_io;
mod synthetic;

pub use cache::WeightCache;
pub use manifest::{DatasetManifest, ManifestEntry, SliceLocator, Split, VolumeSource};
pub use nifti_io::{apply_window, ingest_volume, CtWindow, IngestOptions};
pub use synthetic::{generate_one, generate_synthetic, generate_synthetic_with, ShapeFamily, SyntheticShapeParams};

use ndarray::Array2;

use crate::raster::{self, Mask};

/// One 2D grayscale image in `[0, 1]` with its optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub slice_id: String,
    pub volume_id: String,
    pub image: Array2<f32>,
    pub gt_mask: Option<Mask>,
}

impl Slice {
    pub fn dims(&self) -> (usize, usize) {
        raster::dims(&self.image)
    }

    /// Whether the slice has a nonempty ground truth, i.e. can host clicks.
    pub fn has_foreground(&self) -> bool {
        self.gt_mask.as_ref().is_some_and(|m| m.iter().any(|&v| v))
    }
}
