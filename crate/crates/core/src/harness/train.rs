use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LossKind, TrainConfig};
use super::{mix, str_seed};
use crate::data::{DatasetManifest, Slice, Split, WeightCache};
use crate::error::{Error, Result};
use crate::guidance::{render_guidance, simulate_interaction};
use crate::loss::loss_and_gradient;
use crate::network::{assemble_input, build_network, probabilities, Mode, Model, ModelCheckpoint, TrainingMeta};
use crate::nn::{Adam, Tensor};
use crate::raster;
use crate::weighting::{click_weight_map, fuse_weight_maps};

/// Instrumentation: how often training touched each optional code path.
#[derive(Debug, Default)]
pub struct TrainCounters {
    pub samples: AtomicUsize,
    pub interactions_simulated: AtomicUsize,
    pub guidance_renders: AtomicUsize,
    pub weight_maps_built: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub samples: usize,
    pub interactions_simulated: usize,
    pub guidance_renders: usize,
    pub weight_maps_built: usize,
}

impl TrainCounters {
    pub fn snapshot(&self) -> TrainStats {
        TrainStats {
            samples: self.samples.load(Ordering::Relaxed),
            interactions_simulated: self.interactions_simulated.load(Ordering::Relaxed),
            guidance_renders: self.guidance_renders.load(Ordering::Relaxed),
            weight_maps_built: self.weight_maps_built.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub stats: TrainStats,
    pub seconds: f64,
}

/// Train on the manifest's train split.
pub fn train(config: &TrainConfig, manifest: &DatasetManifest) -> Result<TrainOutcome> {
    let slices = manifest.load_split(Split::Train, config.execution)?;
    train_on(config, &slices, |_, _| Ok(()))
}

/// Train on explicit slices. `on_epoch` runs after every epoch with the
/// current model, e.g. to write periodic checkpoints.
pub fn train_on(
    config: &TrainConfig,
    slices: &[Slice],
    mut on_epoch: impl FnMut(&EpochSummary, &Model) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let usable: Vec<&Slice> = slices.iter().filter(|s| s.has_foreground()).collect();
    if usable.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let skipped = slices.len() - usable.len();
    if skipped > 0 {
        tracing::info!(skipped, "slices without foreground are excluded from training");
    }
    let started = Instant::now();
    let mut model = build_network(&config.network_spec(), config.seed)?;
    let mut adam = Adam::new(config.adam(), model.params().iter().map(Vec::len));
    let cache = WeightCache::in_memory();
    let counters = TrainCounters::default();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(config.seed, 0x5348_5546 ^ epoch as u64)));
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let results = config.execution.map(batch, |&i| {
                sample_gradient(config, &model, usable[i], epoch, &cache, &counters)
            });
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step, detail: format!("loss {loss}") });
                }
                batch_loss += loss;
                for (acc, s) in grads.iter_mut().zip(&g) {
                    acc.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                }
            }
            let inv = 1.0 / batch.len() as f32;
            for g in grads.iter_mut().flat_map(|g| g.iter_mut()) {
                *g *= inv;
                if !g.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step, detail: "non-finite gradient".into() });
                }
            }
            adam.update(model.params_mut(), &grads);
            loss_sum += batch_loss;
        }
        let summary = EpochSummary {
            epoch,
            mean_loss: loss_sum / usable.len() as f64,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        tracing::info!(epoch, loss = summary.mean_loss, seconds = summary.seconds, "epoch done");
        history.push(summary.mean_loss);
        on_epoch(&summary, &model)?;
    }

    let meta = TrainingMeta { epochs: config.epochs, seed: config.seed, config_hash: config.hash(), loss_history: history };
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint::new(model, meta),
        stats: counters.snapshot(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Loss and parameter gradient for one slice.
fn sample_gradient(
    config: &TrainConfig,
    model: &Model,
    slice: &Slice,
    epoch: usize,
    cache: &WeightCache,
    counters: &TrainCounters,
) -> Result<(f64, Vec<Vec<f32>>)> {
    let gt = slice.gt_mask.as_ref().expect("filtered to slices with ground truth");
    let (h, w) = raster::dims(gt);
    let sample_seed = mix(mix(config.seed, epoch as u64), str_seed(&slice.slice_id));
    counters.samples.fetch_add(1, Ordering::Relaxed);

    let clicks = if config.uses_guidance() {
        counters.interactions_simulated.fetch_add(1, Ordering::Relaxed);
        Some(simulate_interaction(gt, &config.click_policy, sample_seed, None)?)
    } else {
        None
    };
    let guidance = match &clicks {
        Some(c) => {
            counters.guidance_renders.fetch_add(1, Ordering::Relaxed);
            Some(render_guidance(c, h, w)?)
        }
        None => None,
    };
    let weights = match config.loss {
        LossKind::Dice => None,
        LossKind::WeightedDice => {
            counters.weight_maps_built.fetch_add(1, Ordering::Relaxed);
            let boundary = cache.boundary_map(&slice.slice_id, gt, &config.weight_config)?;
            match (&clicks, config.click_weights) {
                (Some(c), true) => Some(fuse_weight_maps(&boundary, &click_weight_map(c, h, w, &config.weight_config)?)?),
                _ => Some((*boundary).clone()),
            }
        }
    };

    let x = assemble_input(model.spec(), &slice.image, guidance.as_ref())?;
    let (logits, fwd) = model.forward_logits(&x, Mode::Train { dropout_seed: mix(sample_seed, 0xD50) })?;
    let p = probabilities(&logits);
    let (loss, dp) = loss_and_gradient(&p, gt, weights.as_ref(), &config.loss_config)?;
    let dlogits = Tensor::from_vec(1, h, w, p.iter().zip(dp.iter()).map(|(&p, &d)| (d * p * (1.0 - p)) as f32).collect());
    let mut grads = model.zero_grads();
    model.backward(&fwd, &dlogits, &mut grads);
    Ok((loss, grads))
}
