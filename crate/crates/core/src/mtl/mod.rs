//! Shared-trunk classifier with four severity heads.
//!
//! The network is `x → GELU(trunk x) [→ adapter] → dropout → heads`, with
//! head widths `[3, 3, 2, 2]` in canonical task order. Four training regimes
//! are supported: one task per model, all four tasks jointly (summed
//! cross-entropy), and the same two with a frozen trunk plus a trainable
//! bottleneck adapter shared by every head.

mod checkpoint;
mod layers;
mod net;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader, TensorInfo,
    CHECKPOINT_VERSION,
};
pub use layers::{gelu, gelu_grad, Adapter, Linear};
pub use net::{
    backward, forward, joint_loss, mode_loss, predict, softmax, task_loss, Example, ForwardCache, MtlParams,
    TaskLogits, Weights,
};
pub use optim::AdamW;
pub use train::{train, train_with_init, EpochLog, Split, TrainingLog};

use crate::error::{Error, Result};
use crate::model::PathologyTask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainMode {
    SingleTask(PathologyTask),
    Multitask,
    AdapterSingle(PathologyTask),
    AdapterMultitask,
}

impl TrainMode {
    /// Which heads receive loss and are evaluated, in canonical order.
    pub fn active_tasks(self) -> [bool; 4] {
        match self {
            TrainMode::SingleTask(t) | TrainMode::AdapterSingle(t) => {
                let mut a = [false; 4];
                a[t.index()] = true;
                a
            }
            TrainMode::Multitask | TrainMode::AdapterMultitask => [true; 4],
        }
    }

    pub fn uses_adapter(self) -> bool {
        matches!(self, TrainMode::AdapterSingle(_) | TrainMode::AdapterMultitask)
    }

    /// Adapter modes train only the adapter and the heads.
    pub fn trunk_frozen(self) -> bool {
        self.uses_adapter()
    }

    pub fn default_epochs(self) -> usize {
        match self {
            TrainMode::SingleTask(_) => 15,
            TrainMode::Multitask => 12,
            TrainMode::AdapterSingle(_) => 20,
            TrainMode::AdapterMultitask => 23,
        }
    }

    pub fn default_lr(self) -> f64 {
        if self.uses_adapter() {
            1e-4
        } else {
            1e-3
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainMode::SingleTask(t) => write!(f, "single:{t}"),
            TrainMode::Multitask => f.write_str("multitask"),
            TrainMode::AdapterSingle(t) => write!(f, "adapter-single:{t}"),
            TrainMode::AdapterMultitask => f.write_str("adapter-multitask"),
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multitask" => return Ok(TrainMode::Multitask),
            "adapter-multitask" => return Ok(TrainMode::AdapterMultitask),
            _ => {}
        }
        match s.split_once(':') {
            Some(("single", t)) => Ok(TrainMode::SingleTask(t.parse()?)),
            Some(("adapter-single", t)) => Ok(TrainMode::AdapterSingle(t.parse()?)),
            _ => Err(Error::InvalidConfig(format!(
                "unknown mode {s:?} (expected multitask, adapter-multitask, single:<task>, adapter-single:<task>)"
            ))),
        }
    }
}

impl Serialize for TrainMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrainMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    /// Std of the adapter up-projection at init.
    pub adapter_init_std: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub val_fraction: f64,
    /// Validation-loss patience in epochs; `None` trains every epoch.
    pub early_stopping_patience: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_mode(mode: TrainMode) -> Self {
        Self {
            mode,
            batch_size: 16,
            epochs: mode.default_epochs(),
            lr: mode.default_lr(),
            weight_decay: 1e-4,
            dropout: 0.5,
            hidden_dim: 256,
            adapter_init_std: 1e-5,
            betas: (0.9, 0.999),
            eps: 1e-8,
            val_fraction: 0.1,
            early_stopping_patience: mode.uses_adapter().then_some(3),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || self.hidden_dim == 0 {
            return bad("batch_size and hidden_dim must be positive".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidFraction(self.val_fraction));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_mode(TrainMode::Multitask)
    }
}
