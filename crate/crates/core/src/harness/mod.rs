//! Training loop, multi-interaction evaluation and the ablation grid.

mod config;
mod evaluate;
mod grid;
mod train;

pub use config::{ExperimentGrid, GridEntry, LossKind, ModelKind, OptimizerKind, TrainConfig};
pub use evaluate::{evaluate, evaluate_checkpoint, BudgetScore, EvalOptions, EvalReport, STANDARD_BUDGETS};
pub use grid::{run_grid, run_grid_on, GridReport, GridRow, RowOutcome};
pub use train::{train, train_on, EpochSummary, TrainCounters, TrainOutcome, TrainStats};

/// SplitMix64 finalizer over a combination of two seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(b.rotate_left(29) ^ 0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a string, for per-slice RNG streams.
pub fn str_seed(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3))
}
