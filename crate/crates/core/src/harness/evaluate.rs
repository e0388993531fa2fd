use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{mix, str_seed};
use crate::data::{DatasetManifest, Slice, Split};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::guidance::{estimate_test_time_size, render_guidance, simulate_correction, simulate_interaction, ClickSet, ClickSizePolicy};
use crate::loss::{binarize, dsc, PredictionMap};
use crate::network::{ModelCheckpoint, Segmenter};
use crate::raster::{self, Mask};

/// Interaction budgets reported by default.
pub const STANDARD_BUDGETS: [usize; 5] = [1, 2, 5, 10, 15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Each budget counts interactions, i.e. FG/BG click pairs.
    pub budgets: Vec<usize>,
    pub seed: u64,
    /// Also report 3D DSC per volume, averaged over volumes.
    pub volume_level: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { budgets: STANDARD_BUDGETS.to_vec(), seed: 0, volume_level: false, execution: Execution::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetScore {
    pub budget: usize,
    /// Mean slice DSC over test slices with nonempty ground truth.
    pub mean_dsc: f64,
    pub slices: usize,
    pub volume_dsc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub config_hash: String,
    pub manifest_hash: String,
    pub seed: u64,
    /// DSC after a single interaction.
    pub dsc: f64,
    pub budgets: Vec<BudgetScore>,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

impl EvalReport {
    pub fn at_budget(&self, budget: usize) -> Option<f64> {
        self.budgets.iter().find(|b| b.budget == budget).map(|b| b.mean_dsc)
    }
}

/// Pixel counts behind one DSC value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Overlap {
    intersection: usize,
    predicted: usize,
    truth: usize,
}

impl Overlap {
    fn of(pred: &Mask, gt: &Mask) -> Self {
        Overlap {
            intersection: pred.iter().zip(gt).filter(|(p, g)| **p && **g).count(),
            predicted: raster::count_foreground(pred),
            truth: raster::count_foreground(gt),
        }
    }

    fn add(&mut self, o: Overlap) {
        self.intersection += o.intersection;
        self.predicted += o.predicted;
        self.truth += o.truth;
    }

    fn dsc(self) -> f64 {
        let total = self.predicted + self.truth;
        if total == 0 {
            100.0
        } else {
            100.0 * 2.0 * self.intersection as f64 / total as f64
        }
    }
}

struct SliceOutcome {
    volume_id: String,
    has_foreground: bool,
    /// `(dsc, overlap)` per requested budget, in budget order.
    scores: Vec<(f64, Overlap)>,
}

/// Multi-interaction evaluation of `model` on `slices`.
///
/// Round 1 simulates an interaction from the ground truth at the fixed
/// start size; a dynamic policy then re-estimates the size from that first
/// prediction and predicts again with resized clicks. Each later round adds
/// correction clicks on the false negatives and false positives of the
/// current prediction; a round without a correctable error adds nothing. The RNG stream of a slice depends only on the
/// seed, the slice id and the round, so reports do not depend on execution
/// order.
pub fn evaluate<S: Segmenter + ?Sized>(
    model: &S,
    slices: &[Slice],
    policy: &ClickSizePolicy,
    opts: &EvalOptions,
) -> Result<Vec<BudgetScore>> {
    if opts.budgets.is_empty() || opts.budgets.contains(&0) {
        return Err(Error::InvalidBudget);
    }
    if slices.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    let mut budgets = opts.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    let outcomes: Vec<SliceOutcome> = opts
        .execution
        .map(slices, |s| evaluate_slice(model, s, policy, &budgets, opts.seed))
        .into_iter()
        .collect::<Result<_>>()?;
    let scored: Vec<&SliceOutcome> = outcomes.iter().filter(|o| o.has_foreground).collect();
    if scored.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    Ok(budgets
        .iter()
        .enumerate()
        .map(|(bi, &budget)| {
            let mean_dsc = scored.iter().map(|o| o.scores[bi].0).sum::<f64>() / scored.len() as f64;
            let volume_dsc = opts.volume_level.then(|| {
                let mut volumes: BTreeMap<&str, Overlap> = BTreeMap::new();
                for o in &outcomes {
                    volumes.entry(o.volume_id.as_str()).or_default().add(o.scores[bi].1);
                }
                volumes.values().map(|v| v.dsc()).sum::<f64>() / volumes.len() as f64
            });
            BudgetScore { budget, mean_dsc, slices: scored.len(), volume_dsc }
        })
        .collect())
}

fn evaluate_slice<S: Segmenter + ?Sized>(
    model: &S,
    slice: &Slice,
    policy: &ClickSizePolicy,
    budgets: &[usize],
    seed: u64,
) -> Result<SliceOutcome> {
    let gt = slice.gt_mask.as_ref().ok_or_else(|| Error::InvalidParams(format!("slice {} has no ground truth", slice.slice_id)))?;
    let (h, w) = raster::dims(gt);
    let outcome = |scores| SliceOutcome { volume_id: slice.volume_id.clone(), has_foreground: slice.has_foreground(), scores };
    let score = |pred: &PredictionMap| -> Result<(f64, Overlap)> {
        let b = binarize(pred);
        Ok((dsc(&b, gt)?, Overlap::of(&b, gt)))
    };
    if !slice.has_foreground() || !model.uses_guidance() {
        let s = score(&model.predict(&slice.image, None)?)?;
        return Ok(outcome(vec![s; budgets.len()]));
    }
    let predict = |clicks: &ClickSet| -> Result<PredictionMap> {
        let g = render_guidance(clicks, h, w)?;
        model.predict(&slice.image, Some(&g))
    };
    let policy = policy.for_image(h, w);
    let slice_seed = mix(seed, str_seed(&slice.slice_id));
    let mut size = policy.fixed_size_px.max(1);
    let mut clicks = simulate_interaction(gt, &ClickSizePolicy::fixed(size), mix(slice_seed, 1), None)?;
    let mut pred = predict(&clicks)?;
    if policy.is_dynamic() {
        match estimate_test_time_size(&binarize(&pred), &policy) {
            Ok(s) => {
                size = s;
                clicks = clicks.with_size(s);
                pred = predict(&clicks)?;
            }
            Err(Error::EmptyMask) => {}
            Err(e) => return Err(e),
        }
    }
    let max_budget = *budgets.last().expect("nonempty budgets");
    let mut scores = Vec::with_capacity(budgets.len());
    for round in 1..=max_budget {
        if round > 1 {
            let prior = binarize(&pred);
            let correction = simulate_correction(gt, &ClickSizePolicy::fixed(size), mix(slice_seed, round as u64), &prior)?;
            if !correction.is_empty() {
                clicks.extend(correction);
                pred = predict(&clicks)?;
            }
        }
        if budgets.contains(&round) {
            scores.push(score(&pred)?);
        }
    }
    Ok(outcome(scores))
}

/// Evaluate a checkpoint on the manifest's test split.
pub fn evaluate_checkpoint(
    checkpoint: &ModelCheckpoint,
    manifest: &DatasetManifest,
    policy: &ClickSizePolicy,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let test = manifest.load_split(Split::Test, opts.execution)?;
    let started = Instant::now();
    let budgets = evaluate(&checkpoint.model, &test, policy, opts)?;
    Ok(EvalReport {
        name: String::new(),
        config_hash: checkpoint.meta.config_hash.clone(),
        manifest_hash: manifest.hash(),
        seed: opts.seed,
        dsc: budgets[0].mean_dsc,
        budgets,
        train_seconds: 0.0,
        eval_seconds: started.elapsed().as_secs_f64(),
    })
}
