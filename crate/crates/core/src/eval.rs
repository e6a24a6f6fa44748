//! Metrics, stratified splitting and the inference walltime benchmark.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PathologyTask, TaskLabels};
use crate::mtl::{forward, predict, Example, MtlParams, TaskLogits};

/// Rows are gold classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub task: PathologyTask,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(task: PathologyTask) -> Self {
        Self {
            task,
            counts: vec![vec![0; task.arity()]; task.arity()],
        }
    }

    pub fn from_counts(task: PathologyTask, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = task.arity();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: counts.len(),
            });
        }
        Ok(Self { task, counts })
    }

    pub fn add(&mut self, gold: usize, predicted: usize) {
        self.counts[gold][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn arity(&self) -> usize {
        self.counts.len()
    }

    /// Per-class F1; `None` for a class with neither gold nor predicted
    /// instances.
    pub fn per_class_f1(&self) -> Vec<Option<f64>> {
        let k = self.arity();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let gold: u64 = self.counts[c].iter().sum();
                let pred: u64 = (0..k).map(|r| self.counts[r][c]).sum();
                if gold == 0 && pred == 0 {
                    return None;
                }
                let denom = (gold + pred) as f64;
                Some(if denom == 0.0 { 0.0 } else { 2.0 * tp / denom })
            })
            .collect()
    }
}

/// Unweighted mean of per-class F1 over classes that occur in gold or
/// predictions.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let scores: Vec<f64> = cm.per_class_f1().into_iter().flatten().collect();
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Confusion matrices of `params` on `examples`, one per task.
pub fn evaluate(params: &MtlParams, examples: &[Example]) -> Result<[ConfusionMatrix; 4]> {
    let mut cms = PathologyTask::ALL.map(ConfusionMatrix::new);
    for ex in examples {
        ex.labels.check()?;
        let pred = predict(params, &ex.x)?;
        for (t, cm) in cms.iter_mut().enumerate() {
            cm.add(ex.labels.0[t], pred.0[t]);
        }
    }
    Ok(cms)
}

pub fn macro_f1_per_task(cms: &[ConfusionMatrix; 4]) -> [f64; 4] {
    std::array::from_fn(|t| macro_f1(&cms[t]))
}

/// Macro-F1 of always predicting each task's most frequent gold class.
pub fn majority_baseline(labels: &[TaskLabels]) -> [f64; 4] {
    std::array::from_fn(|t| {
        let task = PathologyTask::ALL[t];
        let mut freq = vec![0usize; task.arity()];
        labels.iter().for_each(|l| freq[l.0[t]] += 1);
        let majority = (0..task.arity()).fold(0, |b, c| if freq[c] > freq[b] { c } else { b });
        let mut cm = ConfusionMatrix::new(task);
        labels.iter().for_each(|l| cm.add(l.0[t], majority));
        macro_f1(&cm)
    })
}

/// Splits `labels.len()` instances into `(train, held_out)` index lists.
///
/// Strata are joint four-task label tuples. Instances whose joint tuple is
/// unique are pooled into strata keyed by their Stenosis class. Each stratum
/// contributes `floor` or `ceil` of `fraction × size` to the held-out side,
/// chosen by largest remainder so the total is `round(fraction × n)`.
pub fn stratified_split(labels: &[TaskLabels], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let mut joint: BTreeMap<[usize; 4], Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        joint.entry(l.0).or_default().push(i);
    }
    let mut strata: BTreeMap<(u8, [usize; 4]), Vec<usize>> = BTreeMap::new();
    for (key, members) in joint {
        if members.len() == 1 {
            strata.entry((1, [key[0], 0, 0, 0])).or_default().extend(members);
        } else {
            strata.insert((0, key), members);
        }
    }
    let strata: Vec<Vec<usize>> = strata.into_values().collect();

    let quotas: Vec<f64> = strata.iter().map(|s| s.len() as f64 * fraction).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let target = (labels.len() as f64 * fraction).round() as usize;
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(take.iter().sum());
    for s in order {
        if missing == 0 {
            break;
        }
        if take[s] < strata[s].len() && quotas[s] > quotas[s].floor() {
            take[s] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (members, k) in strata.into_iter().zip(take) {
        let mut members = members;
        members.shuffle(&mut rng);
        held.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    Ok((train, held))
}

/// Mean and sample standard deviation over trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean: f64,
    pub sd: f64,
    pub trials: usize,
}

impl TrialSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd, trials: n }
    }
}

impl std::fmt::Display for TrialSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.sd)
    }
}

/// Text table with one row per model and one macro-F1 column per task.
pub fn format_f1_table(rows: &[(String, [TrialSummary; 4])]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:width$}", "Model");
    for t in PathologyTask::ALL {
        out.push_str(&format!(" | {:>11}", t.as_str()));
    }
    out.push('\n');
    for (name, cells) in rows {
        out.push_str(&format!("{name:width$}"));
        for c in cells {
            out.push_str(&format!(" | {:>11}", c.to_string()));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config_name: String,
    pub wall_seconds: f64,
    pub instances: usize,
    pub instances_per_second: f64,
}

impl BenchResult {
    fn new(config_name: impl Into<String>, wall_seconds: f64, instances: usize) -> Self {
        let wall_seconds = wall_seconds.max(f64::MIN_POSITIVE);
        Self {
            config_name: config_name.into(),
            wall_seconds,
            instances,
            instances_per_second: instances as f64 / wall_seconds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchOptions {
    pub repeats: usize,
    pub warmup: usize,
    /// 1 runs single-threaded; more spreads inputs over the rayon pool.
    pub workers: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            warmup: 1,
            workers: 1,
        }
    }
}

pub const MIN_BENCH_INPUTS: usize = 100;

fn run_models(models: &[&MtlParams], inputs: &[Vec<f64>], workers: usize) -> Result<f64> {
    // No dropout in eval mode, so the generator is never drawn from.
    let one = |x: &Vec<f64>| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut acc = 0.0;
        for m in models {
            let l: TaskLogits = forward(m, x, false, &mut rng)?;
            acc += l.0.iter().flatten().sum::<f64>();
        }
        Ok(acc)
    };
    if workers <= 1 {
        inputs.iter().map(one).sum()
    } else {
        inputs.par_iter().map(one).sum()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median wall time of each arm. Repeats alternate between the arms so that
/// machine load drifts affect both alike.
fn time_arms(arms: &[Vec<&MtlParams>], inputs: &[Vec<f64>], opts: BenchOptions) -> Result<Vec<f64>> {
    for _ in 0..opts.warmup {
        for arm in arms {
            std::hint::black_box(run_models(arm, inputs, opts.workers)?);
        }
    }
    let mut times = vec![Vec::with_capacity(opts.repeats); arms.len()];
    for _ in 0..opts.repeats.max(1) {
        for (arm, t) in arms.iter().zip(&mut times) {
            let start = Instant::now();
            std::hint::black_box(run_models(arm, std::hint::black_box(inputs), opts.workers)?);
            t.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(times.into_iter().map(median).collect())
}

/// Median wall time of one multitask forward per input against four
/// sequential single-task forwards per input. Returns
/// `[multitask, four single-task]`.
pub fn bench_inference(
    multitask: &MtlParams,
    singles: &[MtlParams; 4],
    inputs: &[Vec<f64>],
    opts: BenchOptions,
) -> Result<[BenchResult; 2]> {
    if inputs.len() < MIN_BENCH_INPUTS {
        return Err(Error::InsufficientSamples {
            needed: MIN_BENCH_INPUTS,
            got: inputs.len(),
        });
    }
    let times = time_arms(&[vec![multitask], singles.iter().collect()], inputs, opts)?;
    let name = |m: &MtlParams| m.mode.to_string();
    let single_name = if singles[0].mode.uses_adapter() {
        "4 x adapter-single"
    } else {
        "4 x single"
    };
    Ok([
        BenchResult::new(name(multitask), times[0], inputs.len()),
        BenchResult::new(single_name, times[1], inputs.len()),
    ])
}

pub fn format_bench_table(results: &[BenchResult]) -> String {
    let width = results.iter().map(|r| r.config_name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:width$} | {:>12} | {:>9} | {:>12}\n", "Model", "Walltime (s)", "Instances", "Instances/s");
    for r in results {
        out.push_str(&format!(
            "{:width$} | {:>12.6} | {:>9} | {:>12.1}\n",
            r.config_name, r.wall_seconds, r.instances, r.instances_per_second
        ));
    }
    out
}
