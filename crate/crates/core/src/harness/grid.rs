use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentGrid, GridEntry};
use super::evaluate::{evaluate, EvalOptions, EvalReport};
use super::train::train_on;
use crate::data::{DatasetManifest, Slice, Split};
use crate::error::{Error, Result};
use crate::network::ModelCheckpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowOutcome {
    Ok { report: EvalReport },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub experiment: usize,
    pub name: String,
    pub outcome: RowOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub manifest_hash: String,
    pub rows: Vec<GridRow>,
}

impl GridReport {
    pub fn report(&self, experiment: usize) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.experiment == experiment).and_then(|r| match &r.outcome {
            RowOutcome::Ok { report } => Some(report),
            RowOutcome::Failed { .. } => None,
        })
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r.outcome, RowOutcome::Failed { .. })).count()
    }

    /// Fixed-width comparison table: one row per experiment, one DSC column
    /// per budget. Runtimes are left out so reruns compare equal.
    pub fn to_table(&self) -> String {
        let budgets: Vec<usize> = self
            .rows
            .iter()
            .find_map(|r| match &r.outcome {
                RowOutcome::Ok { report } => Some(report.budgets.iter().map(|b| b.budget).collect()),
                RowOutcome::Failed { .. } => None,
            })
            .unwrap_or_default();
        let mut out = String::new();
        let _ = write!(out, "{:>3}  {:<28}", "#", "experiment");
        for b in &budgets {
            let _ = write!(out, " {:>8}", format!("DSC@{b}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:>3}  {:<28}", row.experiment, row.name);
            match &row.outcome {
                RowOutcome::Ok { report } => {
                    for b in &report.budgets {
                        let _ = write!(out, " {:>8.2}", b.mean_dsc);
                    }
                }
                RowOutcome::Failed { error } => {
                    let _ = write!(out, " failed: {error}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Train and evaluate every grid entry on the manifest. A failing entry
/// is recorded and the remaining entries still run.
pub fn run_grid(grid: &ExperimentGrid, manifest: &DatasetManifest, opts: &EvalOptions) -> Result<GridReport> {
    grid.validate()?;
    let train = manifest.load_split(Split::Train, opts.execution)?;
    let test = manifest.load_split(Split::Test, opts.execution)?;
    if test.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    Ok(run_grid_on(grid, &train, &test, &manifest.hash(), opts, |_, _| {}))
}

/// Grid over explicit splits. `on_row` sees every finished row together
/// with its trained checkpoint, when training succeeded.
pub fn run_grid_on(
    grid: &ExperimentGrid,
    train: &[Slice],
    test: &[Slice],
    manifest_hash: &str,
    opts: &EvalOptions,
    mut on_row: impl FnMut(&GridRow, Option<&ModelCheckpoint>),
) -> GridReport {
    let mut rows = Vec::with_capacity(grid.entries.len());
    for entry in &grid.entries {
        let result = catch_unwind(AssertUnwindSafe(|| run_entry(entry, train, test, manifest_hash, opts)))
            .unwrap_or_else(|panic| {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(Error::InvalidParams(format!("run panicked: {msg}")))
            });
        let (outcome, ckpt) = match result {
            Ok((report, ckpt)) => (RowOutcome::Ok { report }, Some(ckpt)),
            Err(e) => {
                tracing::warn!(experiment = entry.experiment, error = %e, "grid entry failed");
                (RowOutcome::Failed { error: e.to_string() }, None)
            }
        };
        let row = GridRow { experiment: entry.experiment, name: entry.name.clone(), outcome };
        on_row(&row, ckpt.as_ref());
        rows.push(row);
    }
    GridReport { manifest_hash: manifest_hash.to_string(), rows }
}

fn run_entry(
    entry: &GridEntry,
    train: &[Slice],
    test: &[Slice],
    manifest_hash: &str,
    opts: &EvalOptions,
) -> Result<(EvalReport, ModelCheckpoint)> {
    let config = crate::harness::TrainConfig { execution: opts.execution, ..entry.config.clone() };
    let outcome = train_on(&config, train, |_, _| Ok(()))?;
    let started = Instant::now();
    let budgets = evaluate(&outcome.checkpoint.model, test, &config.click_policy, opts)?;
    let report = EvalReport {
        name: entry.name.clone(),
        config_hash: config.hash(),
        manifest_hash: manifest_hash.to_string(),
        seed: config.seed,
        dsc: budgets[0].mean_dsc,
        budgets,
        train_seconds: outcome.seconds,
        eval_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((report, outcome.checkpoint))
}
