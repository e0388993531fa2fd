use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::guidance::{Alpha, ClickSizePolicy};
use crate::loss::LossConfig;
use crate::network::NetworkSpec;
use crate::nn::AdamConfig;
use crate::weighting::{ClickWeightMode, WeightConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Unet,
    Iunet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Dice,
    WeightedDice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub base_channels: usize,
    pub dropout_rate: f32,
    pub loss: LossKind,
    pub loss_config: LossConfig,
    pub weight_config: WeightConfig,
    /// Add foreground click weights to the boundary map. Without them the
    /// weighted loss uses the boundary map alone.
    pub click_weights: bool,
    pub click_policy: ClickSizePolicy,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Not part of the config hash: both modes give identical results.
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Iunet,
            base_channels: 32,
            dropout_rate: 0.1,
            loss: LossKind::WeightedDice,
            loss_config: LossConfig::default(),
            weight_config: WeightConfig::default(),
            click_weights: true,
            click_policy: ClickSizePolicy::default(),
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    /// Companion of [`SyntheticShapeParams::desk`](crate::data::SyntheticShapeParams::desk):
    /// a narrow network, small batches, a larger step and 20 epochs.
    pub fn desk() -> Self {
        TrainConfig {
            base_channels: 8,
            epochs: 20,
            batch_size: 4,
            learning_rate: 1e-3,
            weight_config: WeightConfig { floor_weight: 1.0, ..WeightConfig::default() },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParams("learning_rate must be positive".into()));
        }
        if self.model == ModelKind::Unet && self.loss == LossKind::WeightedDice && self.click_weights {
            return Err(Error::InvalidParams("click weights need the interactive model".into()));
        }
        self.weight_config.validate()?;
        self.network_spec().validate()
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let spec = match self.model {
            ModelKind::Unet => NetworkSpec::unet(self.base_channels),
            ModelKind::Iunet => NetworkSpec::iunet(self.base_channels),
        };
        NetworkSpec { dropout_rate: self.dropout_rate, ..spec }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() }
    }

    /// Whether training ever renders guidance channels.
    pub fn uses_guidance(&self) -> bool {
        self.model == ModelKind::Iunet
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    /// Experiment number, 1 to 9 for the standard grid.
    pub experiment: usize,
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub entries: Vec<GridEntry>,
}

impl ExperimentGrid {
    /// The nine-row ablation, each row derived from `base`:
    /// 1 U-Net + dice, 2 IU-Net + dice, 3 IU-Net + gaussian boundary map,
    /// 4 with gaussian clicks, 5 with equal-weight clicks, 6 and 7 equal
    /// weight at 2 and 10 px, 8 and 9 dynamic sizing at 1/500 and 1/800.
    pub fn standard(base: &TrainConfig) -> Self {
        let cfg = |model, loss, click_weights, mode, policy| TrainConfig {
            model,
            loss,
            click_weights,
            weight_config: WeightConfig { click_weight_mode: mode, ..base.weight_config },
            click_policy: policy,
            ..base.clone()
        };
        use ClickWeightMode::{EqualWeight as Ew, Gaussian as G};
        use LossKind::{Dice, WeightedDice as Wd};
        use ModelKind::{Iunet, Unet};
        let fixed = ClickSizePolicy::fixed;
        let dynamic = |d| ClickSizePolicy::dynamic(Alpha::one_over(d));
        let rows = [
            ("U-Net + dice", cfg(Unet, Dice, false, Ew, fixed(5))),
            ("IU-Net + dice", cfg(Iunet, Dice, false, Ew, fixed(5))),
            ("IU-Net + G map", cfg(Iunet, Wd, false, Ew, fixed(5))),
            ("IU-Net + G map + G clicks", cfg(Iunet, Wd, true, G, fixed(5))),
            ("IU-Net + G map + EW clicks", cfg(Iunet, Wd, true, Ew, fixed(5))),
            ("EW clicks 2 px", cfg(Iunet, Wd, true, Ew, fixed(2))),
            ("EW clicks 10 px", cfg(Iunet, Wd, true, Ew, fixed(10))),
            ("EW clicks dynamic 1/500", cfg(Iunet, Wd, true, Ew, dynamic(500))),
            ("EW clicks dynamic 1/800", cfg(Iunet, Wd, true, Ew, dynamic(800))),
        ];
        ExperimentGrid {
            entries: rows
                .into_iter()
                .enumerate()
                .map(|(i, (name, config))| GridEntry { experiment: i + 1, name: name.to_string(), config })
                .collect(),
        }
    }

    pub fn get(&self, experiment: usize) -> Option<&GridEntry> {
        self.entries.iter().find(|e| e.experiment == experiment)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidParams("empty experiment grid".into()));
        }
        Ok(())
    }
}
