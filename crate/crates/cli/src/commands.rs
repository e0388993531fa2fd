use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use iseg_core::data::{DatasetManifest, Slice, Split, VolumeSource};
use iseg_core::guidance::{render_guidance, simulate_interaction};
use iseg_core::harness::{self, mix, str_seed, EvalReport, ExperimentGrid};
use iseg_core::network::{ModelCheckpoint, TrainingMeta};
use iseg_core::weighting::{click_weight_map, fuse_weight_maps, gaussian_boundary_map, PEAK_WEIGHT};
use iseg_core::Execution;
use iseg_service::ServiceConfig;

use crate::config::RunConfig;
use crate::run::RunDir;
use crate::{Common, DataArgs};

fn prepare(common: &Common, command: &str) -> anyhow::Result<(RunConfig, RunDir)> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    if common.sequential {
        config.train.execution = Execution::Sequential;
        config.eval.execution = Execution::Sequential;
    }
    let dir = RunDir::create(common.run_dir.as_deref(), &config, command, config.train.seed)?;
    dir.init_logging()?;
    tracing::info!(command, run_dir = %dir.root().display(), "starting");
    Ok((config, dir))
}

/// The manifest named on the command line or in the config, else the
/// configured synthetic set. A copy lands in the run directory.
fn manifest(config: &RunConfig, args: &DataArgs, dir: &RunDir) -> anyhow::Result<DatasetManifest> {
    let manifest = match args.manifest.as_ref().or(config.data.manifest.as_ref()) {
        Some(path) => DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?,
        None => {
            let d = &config.data;
            DatasetManifest::synthetic(d.synthetic.clone(), d.train, d.val, d.test)?
        }
    };
    manifest.validate()?;
    manifest.save(dir.path("manifest.json"))?;
    tracing::info!(
        train = manifest.count(Split::Train),
        val = manifest.count(Split::Val),
        test = manifest.count(Split::Test),
        hash = %manifest.hash(),
        "dataset"
    );
    Ok(manifest)
}

pub fn generate_data(common: &Common) -> anyhow::Result<PathBuf> {
    let (config, dir) = prepare(common, "generate-data")?;
    let d = &config.data;
    let manifest = DatasetManifest::synthetic(d.synthetic.clone(), d.train, d.val, d.test)?;
    // Generating every slice once checks that the parameters are satisfiable.
    for split in [Split::Train, Split::Val, Split::Test] {
        manifest.load_split(split, config.eval.execution)?;
    }
    manifest.save(dir.path("manifest.json"))?;
    tracing::info!(slices = manifest.entries.len(), hash = %manifest.hash(), "manifest written");
    Ok(dir.root().to_path_buf())
}

pub fn ingest(common: &Common, volumes: &[String], roi_label: i64) -> anyhow::Result<PathBuf> {
    let (config, dir) = prepare(common, "ingest")?;
    let mut sources = config.ingest.volumes.clone();
    for v in volumes {
        let (image, label) = match v.split_once(',') {
            Some((i, l)) => (i, Some(PathBuf::from(l))),
            None => (v.as_str(), None),
        };
        sources.push(VolumeSource { image: image.into(), label, roi_label });
    }
    if sources.is_empty() {
        bail!("no volumes given; use --volume or ingest.volumes");
    }
    let i = &config.ingest;
    let manifest = DatasetManifest::from_volumes(sources, i.options.clone(), config.train.seed, i.val_volumes, i.test_volumes)?;
    manifest.save(dir.path("manifest.json"))?;
    tracing::info!(
        volumes = manifest.volumes.len(),
        train = manifest.count(Split::Train),
        val = manifest.count(Split::Val),
        test = manifest.count(Split::Test),
        "manifest written"
    );
    Ok(dir.root().to_path_buf())
}

pub fn train(common: &Common, args: &DataArgs, eval: bool) -> anyhow::Result<PathBuf> {
    let (config, dir) = prepare(common, "train")?;
    let manifest = manifest(&config, args, &dir)?;
    let slices = manifest.load_split(Split::Train, config.train.execution)?;
    let ckpt_dir = dir.checkpoints()?;
    let mut log = BufWriter::new(File::create(dir.path("train_log.jsonl"))?);
    let mut history = Vec::new();
    let every = config.checkpoint_every;
    let outcome = harness::train_on(&config.train, &slices, |summary, model| {
        history.push(summary.mean_loss);
        let io = |e: std::io::Error| iseg_core::Error::Io(e);
        serde_json::to_writer(&mut log, summary).map_err(|e| io(e.into()))?;
        writeln!(log).and_then(|_| log.flush()).map_err(io)?;
        if every > 0 && (summary.epoch + 1) % every == 0 {
            let meta = TrainingMeta {
                epochs: summary.epoch + 1,
                seed: config.train.seed,
                config_hash: config.train.hash(),
                loss_history: history.clone(),
            };
            ModelCheckpoint::new(model.clone(), meta).save(ckpt_dir.join(format!("epoch-{:04}.ckpt", summary.epoch + 1)))?;
        }
        Ok(())
    })?;
    outcome.checkpoint.save(ckpt_dir.join("final.ckpt"))?;
    dir.write_json("train_stats.json", &outcome.stats)?;
    tracing::info!(seconds = outcome.seconds, fingerprint = %outcome.checkpoint.hash(), "training done");

    if eval && manifest.count(Split::Test) > 0 {
        let mut report = harness::evaluate_checkpoint(&outcome.checkpoint, &manifest, &config.train.click_policy, &config.eval)?;
        report.name = "train".into();
        report.config_hash = config.train.hash();
        report.train_seconds = outcome.seconds;
        log_report(&report);
        dir.write_json("report.json", &report)?;
    }
    Ok(dir.root().to_path_buf())
}

pub fn evaluate(common: &Common, args: &DataArgs, checkpoint: &Path) -> anyhow::Result<PathBuf> {
    let (config, dir) = prepare(common, "evaluate")?;
    let manifest = manifest(&config, args, &dir)?;
    let ckpt = ModelCheckpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let mut report = harness::evaluate_checkpoint(&ckpt, &manifest, &config.train.click_policy, &config.eval)?;
    report.name = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    log_report(&report);
    dir.write_json("report.json", &report)?;
    Ok(dir.root().to_path_buf())
}

fn log_report(report: &EvalReport) {
    for b in &report.budgets {
        tracing::info!(budget = b.budget, dsc = b.mean_dsc, slices = b.slices, volume_dsc = ?b.volume_dsc, "evaluation");
    }
}

pub fn grid(common: &Common, args: &DataArgs, experiments: &[usize]) -> anyhow::Result<PathBuf> {
    let (config, dir) = prepare(common, "grid")?;
    let manifest = manifest(&config, args, &dir)?;
    let mut grid = ExperimentGrid::standard(&config.train);
    let wanted = if experiments.is_empty() { &config.grid.experiments } else { experiments };
    if !wanted.is_empty() {
        if let Some(bad) = wanted.iter().find(|&&n| grid.get(n).is_none()) {
            bail!("no experiment {bad} in the grid");
        }
        grid.entries.retain(|e| wanted.contains(&e.experiment));
    }
    grid.validate()?;
    let train = manifest.load_split(Split::Train, config.eval.execution)?;
    let test = manifest.load_split(Split::Test, config.eval.execution)?;
    let ckpt_dir = dir.checkpoints()?;
    let started = Instant::now();
    let report = harness::run_grid_on(&grid, &train, &test, &manifest.hash(), &config.eval, |row, ckpt| {
        tracing::info!(experiment = row.experiment, name = %row.name, elapsed = started.elapsed().as_secs_f64(), "row done");
        if let Some(ckpt) = ckpt {
            if let Err(e) = ckpt.save(ckpt_dir.join(format!("exp-{}.ckpt", row.experiment))) {
                tracing::error!(experiment = row.experiment, error = %e, "could not save checkpoint");
            }
        }
    });
    let table = report.to_table();
    std::fs::write(dir.path("grid.txt"), &table)?;
    dir.write_json("report.json", &report)?;
    eprint!("{table}");
    if report.failures() > 0 {
        tracing::warn!(failures = report.failures(), "some grid rows failed");
    }
    Ok(dir.root().to_path_buf())
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("unknown split {other:?}; expected train, val or test"),
    })
}

fn save_png(path: &Path, h: usize, w: usize, value: impl Fn(usize, usize) -> f32) -> anyhow::Result<()> {
    let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([(value(y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Previews of one simulated training interaction per slice: image, ground
/// truth, both guidance channels, boundary, click and fused weights. Weight
/// maps are scaled linearly so 0 is black and 10 is white.
pub fn export_maps(common: &Common, args: &DataArgs, split: &str, count: usize) -> anyhow::Result<PathBuf> {
    let (config, dir) = prepare(common, "export-maps")?;
    let manifest = manifest(&config, args, &dir)?;
    let split = parse_split(split)?;
    let slices: Vec<Slice> = manifest.load_split(split, config.eval.execution)?.into_iter().filter(|s| s.has_foreground()).take(count).collect();
    let root = dir.path("maps");
    let weights = &config.train.weight_config;
    let scale = 1.0 / PEAK_WEIGHT as f32;
    for slice in &slices {
        let gt = slice.gt_mask.as_ref().expect("filtered to slices with ground truth");
        let (h, w) = slice.dims();
        let out = root.join(slice.slice_id.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-', "_"));
        std::fs::create_dir_all(&out)?;
        let clicks = simulate_interaction(gt, &config.train.click_policy, mix(config.train.seed, str_seed(&slice.slice_id)), None)?;
        let guidance = render_guidance(&clicks, h, w)?;
        let boundary = gaussian_boundary_map(gt, weights)?;
        let click_map = click_weight_map(&clicks, h, w, weights)?;
        let fused = fuse_weight_maps(&boundary, &click_map)?;

        save_png(&out.join("image.png"), h, w, |r, c| slice.image[[r, c]])?;
        save_png(&out.join("gt.png"), h, w, |r, c| if gt[[r, c]] { 1.0 } else { 0.0 })?;
        save_png(&out.join("guidance_fg.png"), h, w, |r, c| guidance.fg[[r, c]])?;
        save_png(&out.join("guidance_bg.png"), h, w, |r, c| guidance.bg[[r, c]])?;
        save_png(&out.join("weights_boundary.png"), h, w, |r, c| boundary.weights[[r, c]] * scale)?;
        save_png(&out.join("weights_clicks.png"), h, w, |r, c| click_map.weights[[r, c]] * scale)?;
        save_png(&out.join("weights_fused.png"), h, w, |r, c| fused.weights[[r, c]] * scale)?;
        fused.write_to(BufWriter::new(File::create(out.join("weights_fused.wmap"))?))?;
        std::fs::write(out.join("clicks.json"), serde_json::to_vec_pretty(&clicks)?)?;
    }
    tracing::info!(slices = slices.len(), dir = %root.display(), "maps written");
    Ok(dir.root().to_path_buf())
}

pub fn serve(common: &Common, port: Option<u16>, checkpoint_dir: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    let mut service: ServiceConfig = config.service.clone().with_env(|k| std::env::var(k).ok())?;
    if let Some(p) = port {
        service.port = p;
    }
    if let Some(d) = checkpoint_dir {
        service.checkpoint_dir = d;
    }
    config.service = service.clone();
    let dir = RunDir::create(common.run_dir.as_deref(), &config, "serve", config.train.seed)?;
    dir.init_logging()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(iseg_service::serve(service))?;
    Ok(dir.root().to_path_buf())
}
