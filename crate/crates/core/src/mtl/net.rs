use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{gelu, gelu_grad, Adapter, Linear};
use super::TrainMode;
use crate::error::{Error, Result};
use crate::model::{PathologyTask, TaskLabels};

/// One training/evaluation instance: a representation and its four labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub labels: TaskLabels,
}

/// All parameter tensors. Also used as the gradient and optimizer-moment
/// container, so every instance has the same shape as the model it mirrors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub trunk: Linear,
    pub adapter: Option<Adapter>,
    pub heads: [Linear; 4],
}

impl Weights {
    pub fn zeros_like(&self) -> Self {
        Self {
            trunk: self.trunk.zeros_like(),
            adapter: self.adapter.as_ref().map(Adapter::zeros_like),
            heads: std::array::from_fn(|t| self.heads[t].zeros_like()),
        }
    }

    fn layers(&self) -> Vec<(String, &Linear)> {
        let mut out = vec![("trunk".to_string(), &self.trunk)];
        if let Some(a) = &self.adapter {
            out.push(("adapter.down".into(), &a.down));
            out.push(("adapter.up".into(), &a.up));
        }
        for (t, h) in PathologyTask::ALL.iter().zip(&self.heads) {
            out.push((format!("head.{t}"), h));
        }
        out
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        self.layers()
            .into_iter()
            .flat_map(|(name, l)| {
                [
                    (format!("{name}.weight"), l.weight.as_slice()),
                    (format!("{name}.bias"), l.bias.as_slice()),
                ]
            })
            .collect()
    }

    /// Mutable tensors in the same order as [`Weights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.trunk.weight, &mut self.trunk.bias];
        if let Some(a) = &mut self.adapter {
            out.push(&mut a.down.weight);
            out.push(&mut a.down.bias);
            out.push(&mut a.up.weight);
            out.push(&mut a.up.bias);
        }
        for h in &mut self.heads {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtlParams {
    pub mode: TrainMode,
    pub dropout: f64,
    pub weights: Weights,
}

impl MtlParams {
    /// All-zero parameters (adapter present iff the mode uses one).
    pub fn zeros(mode: TrainMode, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            mode,
            dropout: 0.0,
            weights: Weights {
                trunk: Linear::zeros(input_dim, hidden_dim),
                adapter: mode.uses_adapter().then(|| Adapter {
                    down: Linear::zeros(hidden_dim, Adapter::BOTTLENECK),
                    up: Linear::zeros(Adapter::BOTTLENECK, hidden_dim),
                }),
                heads: std::array::from_fn(|t| Linear::zeros(hidden_dim, PathologyTask::ARITIES[t])),
            },
        }
    }

    /// Random initialization. The trunk std is `1 / input_rms` so that
    /// pre-activations have roughly unit variance whatever the input scale;
    /// `input_rms` is the root-mean-square input norm of the training data.
    pub fn init<R: Rng + ?Sized>(
        mode: TrainMode,
        input_dim: usize,
        hidden_dim: usize,
        dropout: f64,
        adapter_init_std: f64,
        input_rms: f64,
        rng: &mut R,
    ) -> Self {
        let trunk_std = if input_rms > 0.0 {
            1.0 / input_rms
        } else {
            (1.0 / input_dim as f64).sqrt()
        };
        let trunk = Linear::normal(input_dim, hidden_dim, trunk_std, rng);
        let adapter = mode
            .uses_adapter()
            .then(|| Adapter::near_identity(hidden_dim, adapter_init_std, rng));
        let head_std = (1.0 / hidden_dim as f64).sqrt();
        let heads = std::array::from_fn(|t| Linear::normal(hidden_dim, PathologyTask::ARITIES[t], head_std, rng));
        Self {
            mode,
            dropout,
            weights: Weights { trunk, adapter, heads },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.trunk.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.trunk.out_dim
    }

    pub fn trunk_param_count(&self) -> usize {
        self.weights.trunk.param_count()
    }

    /// Per-tensor trainability, aligned with [`Weights::tensors`].
    pub fn trainable_mask(&self) -> Vec<bool> {
        let active = self.mode.active_tasks();
        let mut mask = vec![!self.mode.trunk_frozen(); 2];
        if self.weights.adapter.is_some() {
            mask.extend([true; 4]);
        }
        for a in active {
            mask.extend([a, a]);
        }
        mask
    }

    pub fn trainable_param_count(&self) -> usize {
        self.weights
            .tensors()
            .iter()
            .zip(self.trainable_mask())
            .filter(|(_, m)| *m)
            .map(|((_, t), _)| t.len())
            .sum()
    }
}

/// Per-task logits, widths `[3, 3, 2, 2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskLogits(pub [Vec<f64>; 4]);

impl TaskLogits {
    pub fn zeros() -> Self {
        Self(std::array::from_fn(|t| vec![0.0; PathologyTask::ARITIES[t]]))
    }

    pub fn get(&self, task: PathologyTask) -> &[f64] {
        &self.0[task.index()]
    }
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    adapter_pre: Vec<f64>,
    adapter_act: Vec<f64>,
    /// Dropout multiplier per hidden unit (0 or `1/(1-p)`); empty when off.
    mask: Vec<f64>,
    features: Vec<f64>,
}

fn forward_cached<R: Rng + ?Sized>(
    params: &MtlParams,
    x: &[f64],
    train_mode: bool,
    rng: &mut R,
) -> Result<(TaskLogits, ForwardCache)> {
    let w = &params.weights;
    if x.len() != w.trunk.in_dim {
        return Err(Error::DimensionMismatch {
            expected: w.trunk.in_dim,
            found: x.len(),
        });
    }
    let mut cache = ForwardCache {
        pre: w.trunk.forward(x),
        ..Default::default()
    };
    cache.hidden = cache.pre.iter().map(|&v| gelu(v)).collect();
    let mut z = cache.hidden.clone();
    if let Some(a) = &w.adapter {
        cache.adapter_pre = a.down.forward(&cache.hidden);
        cache.adapter_act = cache.adapter_pre.iter().map(|&v| gelu(v)).collect();
        let delta = a.up.forward(&cache.adapter_act);
        z.iter_mut().zip(&delta).for_each(|(z, d)| *z += d);
    }
    if train_mode && params.dropout > 0.0 {
        let keep = 1.0 - params.dropout;
        cache.mask = (0..z.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        z.iter_mut().zip(&cache.mask).for_each(|(z, m)| *z *= m);
    }
    let mut logits = TaskLogits::zeros();
    for (t, active) in params.mode.active_tasks().into_iter().enumerate() {
        if active {
            w.heads[t].forward_into(&z, &mut logits.0[t]);
        }
    }
    cache.features = z;
    Ok((logits, cache))
}

/// Forward pass. Dropout is applied only when `train_mode` is set; heads of
/// tasks the mode does not train produce zero logits.
pub fn forward<R: Rng + ?Sized>(params: &MtlParams, x: &[f64], train_mode: bool, rng: &mut R) -> Result<TaskLogits> {
    forward_cached(params, x, train_mode, rng).map(|(l, _)| l)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of one head.
pub fn task_loss(logits: &[f64], class_index: usize) -> Result<f64> {
    if class_index >= logits.len() {
        return Err(Error::InvalidConfig(format!(
            "class {class_index} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[class_index])
}

/// Sum of the four per-task cross-entropies.
pub fn joint_loss(logits: &TaskLogits, labels: &TaskLabels) -> Result<f64> {
    mode_loss(logits, labels, [true; 4])
}

/// Sum of cross-entropies over the `active` tasks.
pub fn mode_loss(logits: &TaskLogits, labels: &TaskLabels, active: [bool; 4]) -> Result<f64> {
    labels.check()?;
    let mut total = 0.0;
    for task in PathologyTask::ALL {
        if active[task.index()] {
            total += task_loss(logits.get(task), labels.get(task))?;
        }
    }
    Ok(total)
}

/// Mean loss over `batch` and its exact gradient with respect to every
/// parameter. Tensors the mode does not train get identically zero gradient.
pub fn backward<R: Rng + ?Sized>(
    params: &MtlParams,
    batch: &[Example],
    train_mode: bool,
    rng: &mut R,
) -> Result<(f64, Weights)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let w = &params.weights;
    let active = params.mode.active_tasks();
    let frozen = params.mode.trunk_frozen();
    let mut grads = w.zeros_like();
    let hidden = params.hidden_dim();
    let mut d_features = vec![0.0; hidden];
    let mut d_row = vec![0.0; hidden];
    let mut total_loss = 0.0;

    for ex in batch {
        let (logits, cache) = forward_cached(params, &ex.x, train_mode, rng)?;
        total_loss += mode_loss(&logits, &ex.labels, active)?;

        d_features.iter_mut().for_each(|d| *d = 0.0);
        for task in PathologyTask::ALL {
            let t = task.index();
            if !active[t] {
                continue;
            }
            let mut g = softmax(&logits.0[t]);
            g[ex.labels.get(task)] -= 1.0;
            Linear::accumulate_grad(&mut grads.heads[t], &cache.features, &g);
            w.heads[t].backward_input(&g, &mut d_row);
            d_features.iter_mut().zip(&d_row).for_each(|(d, r)| *d += r);
        }
        if !cache.mask.is_empty() {
            d_features.iter_mut().zip(&cache.mask).for_each(|(d, m)| *d *= m);
        }

        // d_features is now dL/dz where z = hidden (+ adapter delta).
        let mut d_hidden = d_features.clone();
        if let (Some(a), Some(ga)) = (&w.adapter, &mut grads.adapter) {
            Linear::accumulate_grad(&mut ga.up, &cache.adapter_act, &d_features);
            let mut d_act = vec![0.0; Adapter::BOTTLENECK];
            a.up.backward_input(&d_features, &mut d_act);
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(&cache.adapter_pre)
                .map(|(d, &p)| d * gelu_grad(p))
                .collect();
            Linear::accumulate_grad(&mut ga.down, &cache.hidden, &d_pre);
            if !frozen {
                a.down.backward_input(&d_pre, &mut d_row);
                d_hidden.iter_mut().zip(&d_row).for_each(|(d, r)| *d += r);
            }
        }
        if !frozen {
            let d_pre: Vec<f64> = d_hidden
                .iter()
                .zip(&cache.pre)
                .map(|(d, &p)| d * gelu_grad(p))
                .collect();
            Linear::accumulate_grad(&mut grads.trunk, &ex.x, &d_pre);
        }
    }

    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((total_loss / n, grads))
}

fn argmax_low_tie(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Argmax class per head, ties broken toward the lower (insignificant)
/// class. Heads the mode does not train report class 0.
pub fn predict(params: &MtlParams, x: &[f64]) -> Result<TaskLabels> {
    // Dropout is off, so the generator is never drawn from.
    let mut no_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let logits = forward(params, x, false, &mut no_rng)?;
    let mut out = TaskLabels::default();
    for (t, active) in params.mode.active_tasks().into_iter().enumerate() {
        if active {
            out.0[t] = argmax_low_tie(&logits.0[t]);
        }
    }
    Ok(out)
}
