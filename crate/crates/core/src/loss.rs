//! Soft dice loss, its pixel-weighted form, analytic gradients and the DSC
//! metric.
//!
//! With per-pixel weights `w`, predictions `p` and labels `g`:
//!
//! ```text
//! L = 1 - (k * sum(w p g) + eps) / (sum(w (p + g)) + eps)
//! ```
//!
//! where `k = 2` for the conventional dice and `k = 1` for the variant
//! without the factor two. Unit weights give the unweighted dice loss.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::raster::{self, Mask};
use crate::weighting::WeightMap;

/// Sigmoid probabilities, one per pixel.
pub type PredictionMap = Array2<f64>;

/// Binarization threshold applied before computing DSC.
pub const DSC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiceVariant {
    /// `2 * intersection` numerator, zero loss at perfect overlap.
    Standard,
    /// Numerator without the factor two.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Weights enter every sum pixel by pixel.
    Pixelwise,
    /// Mean weight multiplies the unweighted loss.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub dice_variant: DiceVariant,
    pub weighting_mode: WeightingMode,
    pub smooth_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { dice_variant: DiceVariant::Standard, weighting_mode: WeightingMode::Pixelwise, smooth_eps: 1e-6 }
    }
}

impl LossConfig {
    fn numerator_factor(&self) -> f64 {
        match self.dice_variant {
            DiceVariant::Standard => 2.0,
            DiceVariant::AsPrinted => 1.0,
        }
    }
}

/// Weighted overlap sums: `sum(w p g)` and `sum(w (p + g))`.
fn overlap_sums(pred: &PredictionMap, gt: &Mask, weight: impl Fn(usize) -> f64) -> (f64, f64) {
    let mut inter = 0.0;
    let mut total = 0.0;
    for (i, (&p, &g)) in pred.iter().zip(gt.iter()).enumerate() {
        let w = weight(i);
        let g = if g { 1.0 } else { 0.0 };
        inter += w * p * g;
        total += w * (p + g);
    }
    (inter, total)
}

fn check(pred: &PredictionMap, gt: &Mask, weights: Option<&WeightMap>) -> Result<()> {
    let shape = raster::dims(gt);
    ensure_shape(shape, raster::dims(pred))?;
    if let Some(w) = weights {
        ensure_shape(shape, w.dims())?;
        if w.weights.iter().map(|&v| f64::from(v)).sum::<f64>() == 0.0 {
            return Err(Error::DegenerateWeights);
        }
    }
    Ok(())
}

fn flat_weights(w: &WeightMap) -> Vec<f64> {
    w.weights.iter().map(|&v| f64::from(v)).collect()
}

fn mean_weight(w: &WeightMap) -> f64 {
    w.weights.iter().map(|&v| f64::from(v)).sum::<f64>() / w.weights.len() as f64
}

pub fn dice_loss(pred: &PredictionMap, gt: &Mask, config: &LossConfig) -> Result<f64> {
    check(pred, gt, None)?;
    let (inter, total) = overlap_sums(pred, gt, |_| 1.0);
    let eps = config.smooth_eps;
    Ok(1.0 - (config.numerator_factor() * inter + eps) / (total + eps))
}

pub fn weighted_dice_loss(pred: &PredictionMap, gt: &Mask, weights: &WeightMap, config: &LossConfig) -> Result<f64> {
    check(pred, gt, Some(weights))?;
    match config.weighting_mode {
        WeightingMode::Scalar => Ok(mean_weight(weights) * dice_loss(pred, gt, config)?),
        WeightingMode::Pixelwise => {
            let w = flat_weights(weights);
            let (inter, total) = overlap_sums(pred, gt, |i| w[i]);
            let eps = config.smooth_eps;
            Ok(1.0 - (config.numerator_factor() * inter + eps) / (total + eps))
        }
    }
}

/// Loss and `dL/dp` in one pass. `weights = None` means unit weights.
pub fn loss_and_gradient(
    pred: &PredictionMap,
    gt: &Mask,
    weights: Option<&WeightMap>,
    config: &LossConfig,
) -> Result<(f64, Array2<f64>)> {
    check(pred, gt, weights)?;
    let k = config.numerator_factor();
    let eps = config.smooth_eps;
    let (scale, w): (f64, Option<Vec<f64>>) = match (weights, config.weighting_mode) {
        (None, _) => (1.0, None),
        (Some(wm), WeightingMode::Scalar) => (mean_weight(wm), None),
        (Some(wm), WeightingMode::Pixelwise) => (1.0, Some(flat_weights(wm))),
    };
    let weight = |i: usize| w.as_ref().map_or(1.0, |w| w[i]);
    let (inter, total) = overlap_sums(pred, gt, weight);
    let num = k * inter + eps;
    let den = total + eps;
    let loss = scale * (1.0 - num / den);
    let den2 = den * den;
    let grad_flat: Vec<f64> = gt
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let wi = weight(i);
            let g = if g { 1.0 } else { 0.0 };
            -scale * (k * wi * g * den - num * wi) / den2
        })
        .collect();
    let grad = Array2::from_shape_vec(pred.raw_dim(), grad_flat).map_err(|e| Error::Format(e.to_string()))?;
    Ok((loss, grad))
}

/// `d(weighted dice loss)/dp` for every pixel.
pub fn loss_gradient(pred: &PredictionMap, gt: &Mask, weights: &WeightMap, config: &LossConfig) -> Result<Array2<f64>> {
    loss_and_gradient(pred, gt, Some(weights), config).map(|(_, g)| g)
}

pub fn binarize(pred: &PredictionMap) -> Mask {
    pred.mapv(|p| p >= DSC_THRESHOLD)
}

/// Dice score on a 0-100 scale. Two empty masks score 100.
pub fn dsc(pred_binary: &Mask, gt: &Mask) -> Result<f64> {
    ensure_shape(raster::dims(gt), raster::dims(pred_binary))?;
    let (mut inter, mut sum) = (0usize, 0usize);
    for (&p, &g) in pred_binary.iter().zip(gt.iter()) {
        inter += usize::from(p && g);
        sum += usize::from(p) + usize::from(g);
    }
    if sum == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * 2.0 * inter as f64 / sum as f64)
}
