use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Slice;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::raster::{self, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Ellipse,
    /// Ellipse with a low-frequency radial perturbation.
    Blob,
}

/// Desk-scale stand-in for CT organs: one target region (the ground truth)
/// and optional same-intensity distractor regions elsewhere in the image.
/// With distractors the target can only be identified through clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticShapeParams {
    pub height: usize,
    pub width: usize,
    pub family: ShapeFamily,
    /// Inclusive target area range in pixels.
    pub area_range: (usize, usize),
    pub background: f32,
    pub contrast: f32,
    /// Standard deviation of additive gaussian noise.
    pub noise: f32,
    /// Same-intensity shapes kept at least 3 px away from everything else.
    pub distractors: usize,
    /// Same-intensity shapes touching or slightly overlapping the target,
    /// so part of the target boundary is invisible in the image.
    pub touching_distractors: usize,
    /// Area range for distractors; `None` uses `area_range`. The target is
    /// drawn uniformly from itself and its touching distractors, so with a
    /// separate range its area can come from either.
    pub distractor_area_range: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for SyntheticShapeParams {
    fn default() -> Self {
        SyntheticShapeParams {
            height: 64,
            width: 64,
            family: ShapeFamily::Blob,
            area_range: (200, 3000),
            background: 0.2,
            contrast: 0.5,
            noise: 0.05,
            distractors: 0,
            touching_distractors: 0,
            distractor_area_range: None,
            seed: 0,
        }
    }
}

impl SyntheticShapeParams {
    /// Small 64x64 set for runs that finish on a desktop CPU. Each slice has
    /// two touching shapes of similar size and only the clicks tell which
    /// one is the target.
    pub fn desk() -> Self {
        SyntheticShapeParams {
            area_range: (1000, 2000),
            distractor_area_range: Some((800, 2000)),
            touching_distractors: 1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let canvas = self.height * self.width;
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidParams("canvas must be at least 8x8".into()));
        }
        for (lo, hi) in std::iter::once(self.area_range).chain(self.distractor_area_range) {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidParams(format!("bad area range [{lo}, {hi}]")));
            }
            if hi * 4 > canvas * 3 {
                return Err(Error::InvalidParams(format!(
                    "area range [{lo}, {hi}] exceeds the {}x{} canvas",
                    self.height, self.width
                )));
            }
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidParams("noise must be nonnegative".into()));
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 200;
/// Minimum gap in pixels between the target and any distractor.
const DISTRACTOR_GAP: f64 = 3.0;

/// Generate `count` slices; slice `i` depends only on `(params, i)`.
pub fn generate_synthetic(params: &SyntheticShapeParams, count: usize) -> Result<Vec<Slice>> {
    generate_synthetic_with(params, count, Execution::default())
}

pub fn generate_synthetic_with(params: &SyntheticShapeParams, count: usize, exec: Execution) -> Result<Vec<Slice>> {
    if count == 0 {
        return Err(Error::InvalidParams("count must be positive".into()));
    }
    params.validate()?;
    exec.map_indexed(count, |i| generate_one(params, i)).into_iter().collect()
}

fn slice_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub fn generate_one(params: &SyntheticShapeParams, index: usize) -> Result<Slice> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(slice_seed(params.seed, index));
    let (h, w) = (params.height, params.width);
    let target = (0..MAX_ATTEMPTS)
        .find_map(|_| shape(params, &mut rng, Placement::Free))
        .ok_or_else(|| Error::InvalidParams("could not place a target shape".into()))?;
    let mut occupied = target.clone();
    let edge: Vec<(usize, usize)> = raster::boundary(&target).indexed_iter().filter(|(_, &b)| b).map(|(p, _)| p).collect();
    let mut group = vec![target];
    for _ in 0..params.touching_distractors {
        let placement = Placement::Touching { target: &group[0], edge: &edge };
        if let Some(d) = (0..MAX_ATTEMPTS).find_map(|_| shape(params, &mut rng, placement)) {
            occupied.zip_mut_with(&d, |a, &b| *a |= b);
            group.push(d);
        }
    }
    // Any shape of the touching group can be the target, so its position
    // on the canvas says nothing about which one it is.
    let target = group.swap_remove(rng.random_range(0..group.len()));
    for _ in 0..params.distractors {
        let clearance = raster::squared_distance_transform(&occupied);
        if let Some(d) = (0..MAX_ATTEMPTS).find_map(|_| shape(params, &mut rng, Placement::Apart(&clearance))) {
            occupied.zip_mut_with(&d, |a, &b| *a |= b);
        }
    }
    let noise = Normal::new(0.0f32, params.noise.max(f32::MIN_POSITIVE)).expect("finite noise");
    let image = Array2::from_shape_fn((h, w), |p| {
        let base = if occupied[p] { params.background + params.contrast } else { params.background };
        let n = if params.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        (base + n).clamp(0.0, 1.0)
    });
    let id = format!("syn-{:05}", index);
    Ok(Slice { slice_id: id.clone(), volume_id: id, image, gt_mask: Some(target) })
}

#[derive(Clone, Copy)]
enum Placement<'a> {
    Free,
    /// Squared distance to occupied pixels; keep [`DISTRACTOR_GAP`] away.
    Apart(&'a Array2<f64>),
    /// Centered just outside a boundary pixel of the target; must touch it
    /// and overlap at most a quarter of either shape.
    Touching { target: &'a Mask, edge: &'a [(usize, usize)] },
}

/// One connected shape with area in range, or `None` if this draw failed.
fn shape(params: &SyntheticShapeParams, rng: &mut ChaCha8Rng, placement: Placement) -> Option<Mask> {
    let (h, w) = (params.height, params.width);
    let (lo, hi) = match placement {
        Placement::Free => params.area_range,
        _ => params.distractor_area_range.unwrap_or(params.area_range),
    };
    let area = rng.random_range(lo..=hi) as f64;
    let aspect = rng.random_range(0.55..=1.0);
    let angle = rng.random_range(0.0..PI);
    let harmonics: Vec<(f64, f64)> = match params.family {
        ShapeFamily::Ellipse => Vec::new(),
        ShapeFamily::Blob => (2..=4).map(|_| (rng.random_range(-0.12..0.12), rng.random_range(0.0..2.0 * PI))).collect(),
    };
    let mut a = (area / (PI * aspect)).sqrt();
    let reach = a * 1.15 + 1.0;
    let span = |n: usize| -> (f64, f64) {
        let n = n as f64;
        if 2.0 * reach >= n - 1.0 {
            (n / 2.0, n / 2.0)
        } else {
            (reach, n - 1.0 - reach)
        }
    };
    let (r0, r1) = span(h);
    let (c0, c1) = span(w);
    let center = match placement {
        Placement::Touching { edge, .. } => {
            let (er, ec) = *edge.get(rng.random_range(0..edge.len().max(1)))?;
            let dir = rng.random_range(0.0..2.0 * PI);
            let dist = a * aspect * rng.random_range(0.6..1.1);
            // may run off the canvas; the raster is clipped
            ((er as f64 + dist * dir.sin()).clamp(0.0, (h - 1) as f64), (ec as f64 + dist * dir.cos()).clamp(0.0, (w - 1) as f64))
        }
        _ => (rng.random_range(r0..=r1), rng.random_range(c0..=c1)),
    };
    if let Placement::Apart(d2) = placement {
        let (r, c) = (center.0.round() as usize, center.1.round() as usize);
        if d2[(r.min(h - 1), c.min(w - 1))] <= (DISTRACTOR_GAP + 0.5 * a * aspect).powi(2) {
            return None;
        }
    }
    let (sin, cos) = angle.sin_cos();
    let max_amp: f64 = harmonics.iter().map(|(amp, _)| amp.abs()).sum();
    let raster = |a: f64| -> Mask {
        let b = a * aspect;
        let extent = a * (1.0 + max_amp) + 1.0;
        let rows = (center.0 - extent).floor().max(0.0) as usize..=((center.0 + extent).ceil() as usize).min(h - 1);
        let cols = (center.1 - extent).floor().max(0.0) as usize..=((center.1 + extent).ceil() as usize).min(w - 1);
        let mut mask = Array2::from_elem((h, w), false);
        for r in rows {
            for c in cols.clone() {
                let (dy, dx) = (r as f64 - center.0, c as f64 - center.1);
                let u = (dx * cos + dy * sin) / a;
                let v = (-dx * sin + dy * cos) / b;
                let rho = (u * u + v * v).sqrt();
                let phi = v.atan2(u);
                let limit = 1.0 + harmonics.iter().enumerate().map(|(k, (amp, ph))| amp * ((k + 2) as f64 * phi + ph).cos()).sum::<f64>();
                mask[(r, c)] = rho <= limit;
            }
        }
        mask
    };
    let mut mask = raster(a);
    for _ in 0..6 {
        let n = raster::count_foreground(&mask);
        if n == 0 {
            a *= 1.5;
        } else if (lo..=hi).contains(&n) {
            break;
        } else {
            a *= (area / n as f64).sqrt();
        }
        mask = raster(a);
    }
    let n = raster::count_foreground(&mask);
    if !(lo..=hi).contains(&n) || !raster::is_connected(&mask) || n == h * w {
        return None;
    }
    match placement {
        Placement::Free => {}
        Placement::Apart(d2) => {
            if mask.indexed_iter().any(|(p, &m)| m && d2[p] <= DISTRACTOR_GAP * DISTRACTOR_GAP) {
                return None;
            }
        }
        Placement::Touching { target, .. } => {
            let overlap = mask.iter().zip(target.iter()).filter(|(m, t)| **m && **t).count();
            let touches = overlap > 0
                || mask.indexed_iter().any(|((r, c), &m)| {
                    m && [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)]
                        .iter()
                        .any(|&q| target.get(q).copied().unwrap_or(false))
                });
            let limit = n.min(raster::count_foreground(target)) / 4;
            if !touches || overlap > limit {
                return None;
            }
        }
    }
    Some(mask)
}
