use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{backward, forward, mode_loss, Example, MtlParams};
use super::optim::AdamW;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, macro_f1};
use crate::hashing::derive_seed;
use crate::model::{PathologyTask, TaskLabels};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One JSONL line of the training log. Macro-F1 is `None` for tasks the
/// mode does not train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub macro_f1: [Option<f64>; 4],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("log serializes") + "\n")
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self, split: Split) -> Option<&EpochLog> {
        self.entries.iter().rev().find(|e| e.split == split)
    }
}

pub fn train(dataset: &[Example], config: &TrainConfig) -> Result<(MtlParams, TrainingLog)> {
    train_with_init(dataset, config, None)
}

fn check_dataset(dataset: &[Example]) -> Result<usize> {
    let first = dataset.first().ok_or(Error::EmptyInput("training set"))?;
    let dim = first.x.len();
    for ex in dataset {
        if ex.x.len() != dim {
            return Err(Error::InconsistentDimension {
                first: dim,
                other: ex.x.len(),
            });
        }
        ex.labels.check()?;
    }
    Ok(dim)
}

/// Every class that occurs in the dataset for an active task must also be
/// present in the training portion.
fn check_degenerate(all: &[TaskLabels], train: &[usize], active: [bool; 4]) -> Result<()> {
    for task in PathologyTask::ALL {
        if !active[task.index()] {
            continue;
        }
        for class_index in 0..task.arity() {
            let in_data = all.iter().any(|l| l.get(task) == class_index);
            let in_train = train.iter().any(|&i| all[i].get(task) == class_index);
            if in_data && !in_train {
                return Err(Error::DegenerateSplit { task, class_index });
            }
        }
    }
    Ok(())
}

fn epoch_eval(params: &MtlParams, examples: &[Example], epoch: usize, split: Split, loss: f64) -> Result<EpochLog> {
    let cms = evaluate(params, examples)?;
    let active = params.mode.active_tasks();
    Ok(EpochLog {
        epoch,
        split,
        loss,
        macro_f1: std::array::from_fn(|t| active[t].then(|| macro_f1(&cms[t]))),
    })
}

fn eval_loss(params: &MtlParams, examples: &[Example]) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let active = params.mode.active_tasks();
    let mut total = 0.0;
    for ex in examples {
        let logits = forward(params, &ex.x, false, &mut rng)?;
        total += mode_loss(&logits, &ex.labels, active)?;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Trains a model. With `init`, the trunk is copied from `init` (it must
/// have the same input and hidden sizes); adapter modes then keep it frozen.
pub fn train_with_init(
    dataset: &[Example],
    config: &TrainConfig,
    init: Option<&MtlParams>,
) -> Result<(MtlParams, TrainingLog)> {
    config.validate()?;
    let input_dim = check_dataset(dataset)?;
    let labels: Vec<TaskLabels> = dataset.iter().map(|e| e.labels).collect();
    let (train_idx, val_idx) = crate::eval::stratified_split(&labels, config.val_fraction, derive_seed(config.seed, 1))?;
    check_degenerate(&labels, &train_idx, config.mode.active_tasks())?;
    let train_set: Vec<&Example> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let val_set: Vec<Example> = val_idx.iter().map(|&i| dataset[i].clone()).collect();

    let input_rms =
        (train_set.iter().map(|e| e.x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / train_set.len() as f64).sqrt();
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let mut params = MtlParams::init(
        config.mode,
        input_dim,
        config.hidden_dim,
        config.dropout,
        config.adapter_init_std,
        input_rms,
        &mut init_rng,
    );
    if let Some(init) = init {
        if init.input_dim() != input_dim || init.hidden_dim() != config.hidden_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim * config.hidden_dim,
                found: init.input_dim() * init.hidden_dim(),
            });
        }
        params.weights.trunk = init.weights.trunk.clone();
    }

    let trainable = params.trainable_mask();
    let mut opt = AdamW::new(&params.weights, config.betas, config.eps, config.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 4));
    let batches_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total_steps = (batches_per_epoch * config.epochs) as f64;

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, usize, MtlParams)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let train_eval: Vec<Example> = train_set.iter().map(|e| (*e).clone()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let lr = config.lr * (1.0 - opt.steps() as f64 / total_steps);
            let (loss, grads) = backward(&params, &batch, true, &mut dropout_rng)?;
            loss_sum += loss * batch.len() as f64;
            opt.step(&mut params.weights, &grads, &trainable, lr);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        log.entries.push(epoch_eval(&params, &train_eval, epoch, Split::Train, train_loss)?);
        let val_loss = eval_loss(&params, &val_set)?;
        log.entries.push(epoch_eval(&params, &val_set, epoch, Split::Val, val_loss)?);
        log::debug!("{} epoch {epoch}: train {train_loss:.4} val {val_loss:.4}", config.mode);

        if let Some(patience) = config.early_stopping_patience {
            if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                best = Some((val_loss, epoch, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }

    match best {
        Some((_, epoch, p)) => {
            log.best_epoch = epoch;
            Ok((p, log))
        }
        None => {
            log.best_epoch = config.epochs;
            Ok((params, log))
        }
    }
}
