use std::path::Path;

use ndarray::{Array2, ArrayD, Axis, Ix3};
use nifti::{IntoNdArray, NiftiObject, ReaderOptions};
use serde::{Deserialize, Serialize};

use super::Slice;
use crate::error::{Error, Result};

/// Intensity window in Hounsfield units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtWindow {
    pub low: f32,
    pub high: f32,
}

impl Default for CtWindow {
    /// Abdominal soft tissue.
    fn default() -> Self {
        CtWindow { low: -100.0, high: 400.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub window: CtWindow,
    /// Drop slices whose ground truth is empty instead of keeping them.
    pub drop_empty: bool,
    /// Fail with `UnknownLabel` when the ROI label never occurs, instead of
    /// warning and returning empty masks.
    pub strict_label: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { window: CtWindow::default(), drop_empty: false, strict_label: false }
    }
}

/// Clamp to the window, then map the window linearly onto `[0, 1]`.
pub fn apply_window(hu: f32, window: CtWindow) -> f32 {
    let span = window.high - window.low;
    if !(span > 0.0) {
        return if hu >= window.high { 1.0 } else { 0.0 };
    }
    ((hu.clamp(window.low, window.high) - window.low) / span).clamp(0.0, 1.0)
}

fn read_volume(path: &Path) -> Result<ArrayD<f32>> {
    if !path.exists() {
        return Err(Error::FileMissing(path.to_path_buf()));
    }
    let obj = ReaderOptions::new().read_file(path)?;
    Ok(obj.into_volume().into_ndarray::<f32>()?)
}

fn as_3d(arr: ArrayD<f32>) -> Result<ndarray::Array3<f32>> {
    let shape = arr.shape().to_vec();
    let arr = match shape.len() {
        2 => arr.insert_axis(Axis(2)),
        3 => arr,
        4 if shape[3] == 1 => arr.index_axis_move(Axis(3), 0),
        n => return Err(Error::Format(format!("expected a 3D volume, got {n} dimensions"))),
    };
    arr.into_dimensionality::<Ix3>().map_err(|e| Error::Format(e.to_string()))
}

/// Axial slices of a NIfTI volume (`.nii` or `.nii.gz`).
///
/// The volume is indexed `[x, y, z]`; slice `z` becomes an image with rows
/// along `y` and columns along `x`. Slice ids are `"{volume_id}:{z:04}"`
/// where the volume id is the file stem.
pub fn ingest_volume(path: &Path, label_path: Option<&Path>, roi_label: i64, opts: &IngestOptions) -> Result<Vec<Slice>> {
    let image = as_3d(read_volume(path)?)?;
    let labels = match label_path {
        Some(p) => {
            let labels = as_3d(read_volume(p)?)?;
            if labels.shape() != image.shape() {
                let dims = |s: &[usize]| s.iter().map(|&d| d as u16).collect();
                return Err(Error::GridMismatch { image: dims(image.shape()), label: dims(labels.shape()) });
            }
            Some(labels)
        }
        None => None,
    };
    let roi = roi_label as f32;
    if let Some(labels) = &labels {
        if !labels.iter().any(|&v| v == roi) {
            if opts.strict_label {
                return Err(Error::UnknownLabel(roi_label));
            }
            tracing::warn!(roi_label, path = %path.display(), "ROI label absent from label volume; all masks are empty");
        }
    }
    let volume_id = volume_id(path);
    let depth = image.shape()[2];
    let mut slices = Vec::with_capacity(depth);
    for z in 0..depth {
        let plane = image.index_axis(Axis(2), z);
        let img = Array2::from_shape_fn((plane.shape()[1], plane.shape()[0]), |(r, c)| apply_window(plane[(c, r)], opts.window));
        let gt = labels.as_ref().map(|l| {
            let lp = l.index_axis(Axis(2), z);
            Array2::from_shape_fn((lp.shape()[1], lp.shape()[0]), |(r, c)| lp[(c, r)] == roi)
        });
        let slice = Slice { slice_id: format!("{volume_id}:{z:04}"), volume_id: volume_id.clone(), image: img, gt_mask: gt };
        if opts.drop_empty && slice.gt_mask.is_some() && !slice.has_foreground() {
            continue;
        }
        slices.push(slice);
    }
    Ok(slices)
}

fn volume_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.trim_end_matches(".gz").trim_end_matches(".nii").to_string()
}
