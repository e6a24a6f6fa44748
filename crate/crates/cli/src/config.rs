//! The `--config` TOML file. Every section is optional; flags override it.

use std::path::Path;

use cspine_core::eval::BenchOptions;
use cspine_core::features::HashedFeaturizerConfig;
use cspine_core::mtl::{TrainConfig, TrainMode};
use cspine_core::pipeline::{TrainOverrides, TrialConfig};
use cspine_core::segmenter::GroupingRuleConfig;
use cspine_core::similarity::SwConfig;
use cspine_core::synth::GeneratorConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generate: GeneratorConfig,
    pub grouping: GroupingRuleConfig,
    pub features: HashedFeaturizerConfig,
    pub train: TrainSection,
    pub eval: TrialConfig,
    pub distance: DistanceSection,
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
            _ => CliError::Runtime(format!("{}: {e}", path.display())),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: TrainMode,
    pub seed: u64,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub hidden_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            mode: TrainMode::Multitask,
            seed: 0,
            epochs: None,
            lr: None,
            hidden_dim: None,
            batch_size: None,
            dropout: None,
        }
    }
}

impl TrainSection {
    pub fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            epochs: self.epochs,
            lr: self.lr,
            hidden_dim: self.hidden_dim,
            batch_size: self.batch_size,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.overrides().apply(TrainConfig::for_mode(self.mode).with_seed(self.seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub n_projections: usize,
    pub projection_dims: Vec<usize>,
    pub seed: u64,
    pub include_class0: bool,
}

impl Default for DistanceSection {
    fn default() -> Self {
        let sw = SwConfig::default();
        Self {
            n_projections: sw.n_projections,
            projection_dims: sw.projection_dims,
            seed: sw.seed,
            include_class0: false,
        }
    }
}

impl DistanceSection {
    pub fn sw_config(&self) -> SwConfig {
        SwConfig {
            n_projections: self.n_projections,
            projection_dims: self.projection_dims.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub inputs: usize,
    pub hidden_dim: usize,
    pub adapter: bool,
    pub seed: u64,
    pub options: BenchOptions,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            inputs: 1000,
            hidden_dim: 256,
            adapter: false,
            seed: 0,
            options: BenchOptions::default(),
        }
    }
}
