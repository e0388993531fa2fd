use iseg_core::data::{generate_synthetic, DatasetManifest, Slice, SyntheticShapeParams};
use iseg_core::guidance::{Alpha, ClickSizePolicy, GuidanceMaps};
use iseg_core::harness::{
    evaluate, run_grid_on, train_on, EvalOptions, ExperimentGrid, LossKind, ModelKind, RowOutcome, TrainConfig,
};
use iseg_core::loss::PredictionMap;
use iseg_core::network::Segmenter;
use iseg_core::{Error, Execution};
use ndarray::Array2;

fn slices(count: usize, seed: u64) -> Vec<Slice> {
    let params = SyntheticShapeParams { height: 32, width: 32, area_range: (40, 300), seed, ..Default::default() };
    generate_synthetic(&params, count).unwrap()
}

fn tiny(model: ModelKind, loss: LossKind, epochs: usize) -> TrainConfig {
    TrainConfig {
        model,
        loss,
        click_weights: model == ModelKind::Iunet,
        base_channels: 4,
        epochs,
        batch_size: 4,
        learning_rate: 1e-3,
        ..Default::default()
    }
}

/// Returns the ground truth of whichever slice has the same image.
struct Oracle<'a>(&'a [Slice]);

impl Segmenter for Oracle<'_> {
    fn uses_guidance(&self) -> bool {
        true
    }

    fn predict(&self, image: &Array2<f32>, _: Option<&GuidanceMaps>) -> iseg_core::Result<PredictionMap> {
        let s = self.0.iter().find(|s| &s.image == image).expect("known image");
        Ok(s.gt_mask.as_ref().unwrap().mapv(|g| if g { 1.0 } else { 0.0 }))
    }
}

#[test]
fn oracle_scores_100_at_every_budget() {
    let test = slices(12, 3);
    let scores = evaluate(&Oracle(&test), &test, &ClickSizePolicy::default(), &EvalOptions::default()).unwrap();
    assert_eq!(scores.iter().map(|b| b.budget).collect::<Vec<_>>(), [1, 2, 5, 10, 15]);
    assert!(scores.iter().all(|b| b.mean_dsc == 100.0 && b.slices == 12));
    let dynamic = ClickSizePolicy::dynamic(Alpha::one_over(800));
    let scores = evaluate(&Oracle(&test), &test, &dynamic, &EvalOptions { budgets: vec![1], ..Default::default() }).unwrap();
    assert_eq!(scores[0].mean_dsc, 100.0);
}

#[test]
fn budget_and_split_preconditions() {
    let test = slices(2, 3);
    let oracle = Oracle(&test);
    let policy = ClickSizePolicy::default();
    for budgets in [vec![0], vec![], vec![1, 0, 5]] {
        let err = evaluate(&oracle, &test, &policy, &EvalOptions { budgets, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::InvalidBudget));
    }
    assert!(matches!(evaluate(&oracle, &[], &policy, &EvalOptions::default()), Err(Error::EmptyTestSplit)));
    let empty: Vec<Slice> = test.iter().map(|s| Slice { gt_mask: Some(Array2::from_elem(s.dims(), false)), ..s.clone() }).collect();
    assert!(matches!(evaluate(&Oracle(&empty), &empty, &policy, &EvalOptions::default()), Err(Error::EmptyTestSplit)));
}

#[test]
fn plain_unet_never_touches_guidance_or_weights() {
    let out = train_on(&tiny(ModelKind::Unet, LossKind::Dice, 1), &slices(8, 1), |_, _| Ok(())).unwrap();
    assert_eq!(out.stats.samples, 8);
    assert_eq!((out.stats.interactions_simulated, out.stats.guidance_renders, out.stats.weight_maps_built), (0, 0, 0));

    let out = train_on(&tiny(ModelKind::Iunet, LossKind::WeightedDice, 1), &slices(8, 1), |_, _| Ok(())).unwrap();
    assert_eq!((out.stats.interactions_simulated, out.stats.guidance_renders, out.stats.weight_maps_built), (8, 8, 8));
}

#[test]
fn empty_training_split_is_rejected() {
    let blank: Vec<Slice> = slices(3, 1).into_iter().map(|s| Slice { gt_mask: None, ..s }).collect();
    let err = train_on(&tiny(ModelKind::Iunet, LossKind::Dice, 1), &blank, |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::EmptyTrainSplit));
}

#[test]
fn training_reduces_loss() {
    let config = TrainConfig { base_channels: 8, ..tiny(ModelKind::Iunet, LossKind::WeightedDice, 5) };
    let mut losses = Vec::new();
    train_on(&config, &slices(200, 5), |s, _| {
        losses.push(s.mean_loss);
        Ok(())
    })
    .unwrap();
    assert!(losses[4] < losses[0], "{losses:?}");
}

#[test]
fn training_is_reproducible_across_execution_modes() {
    let data = slices(12, 2);
    let run = |execution| {
        let config = TrainConfig { execution, ..tiny(ModelKind::Iunet, LossKind::WeightedDice, 2) };
        train_on(&config, &data, |_, _| Ok(())).unwrap().checkpoint
    };
    let a = run(Execution::Sequential);
    let b = run(Execution::Sequential);
    let c = run(Execution::Parallel);
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash(), c.hash());
    assert_eq!(a.meta.loss_history, c.meta.loss_history);

    let opts = |execution| EvalOptions { budgets: vec![1, 3], execution, ..Default::default() };
    let policy = ClickSizePolicy::dynamic(Alpha::one_over(500));
    let seq = evaluate(&a.model, &data, &policy, &opts(Execution::Sequential)).unwrap();
    let par = evaluate(&c.model, &data, &policy, &opts(Execution::Parallel)).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn grid_isolates_failing_rows() {
    let base = tiny(ModelKind::Iunet, LossKind::WeightedDice, 1);
    let mut grid = ExperimentGrid::standard(&base);
    assert_eq!(grid.entries.len(), 9);
    grid.entries[3].config.learning_rate = -1.0;
    let (train, test) = (slices(4, 7), slices(3, 8));
    let opts = EvalOptions { budgets: vec![1, 2], ..Default::default() };
    let mut seen = 0;
    let report = run_grid_on(&grid, &train, &test, "m", &opts, |_, _| seen += 1);
    assert_eq!((seen, report.rows.len(), report.failures()), (9, 9, 1));
    assert!(matches!(report.rows[3].outcome, RowOutcome::Failed { .. }));
    assert!(report.report(4).is_none() && report.report(5).is_some());
    let table = report.to_table();
    assert_eq!(table.lines().count(), 10);
    assert!(table.contains("U-Net + dice") && table.contains("EW clicks dynamic 1/800"));

    let again = run_grid_on(&grid, &train, &test, "m", &opts, |_, _| {});
    assert_eq!(again.to_table(), table);
}

#[test]
fn manifest_round_trip_drives_training() {
    let params = SyntheticShapeParams { height: 32, width: 32, area_range: (40, 300), ..Default::default() };
    let manifest = DatasetManifest::synthetic(params, 6, 0, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    manifest.save(&path).unwrap();
    let loaded = DatasetManifest::load(&path).unwrap();
    assert_eq!(loaded.hash(), manifest.hash());
    let out = iseg_core::harness::train(&tiny(ModelKind::Unet, LossKind::Dice, 1), &loaded).unwrap();
    assert_eq!(out.stats.samples, 6);
}
