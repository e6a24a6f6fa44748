//! End-to-end glue: reports → bundles → features → examples, and the
//! multi-seed single-task versus multitask comparison.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, macro_f1, macro_f1_per_task, stratified_split, ConfusionMatrix, TrialSummary};
use crate::features::{featurize, EmbeddingIndex, EmbeddingRecord, HashedFeaturizerConfig};
use crate::model::{PathologyTask, Report, SegmentBundle, TaskLabels};
use crate::mtl::{train, Example, TrainConfig, TrainMode};
use crate::segmenter::{audit_grouping, build_labeled_bundles, groups_from_audit, labels_from_bundles, split_sentences, GroupingRuleConfig};

/// Segmented bundles of a corpus plus the segments dropped for lack of gold
/// labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentedCorpus {
    pub bundles: Vec<SegmentBundle>,
    pub skipped: Vec<(String, crate::model::MotionSegment)>,
}

/// Re-segments every report and attaches the gold labels of `gold`
/// (matched by report id and segment).
pub fn segment_corpus(reports: &[Report], gold: &[SegmentBundle], rules: &GroupingRuleConfig) -> Result<SegmentedCorpus> {
    let mut by_report: HashMap<&str, Vec<&SegmentBundle>> = HashMap::new();
    for b in gold {
        by_report.entry(b.report_id.as_str()).or_default().push(b);
    }
    let mut out = SegmentedCorpus::default();
    for report in reports {
        let labels = labels_from_bundles(by_report.get(report.report_id.as_str()).into_iter().flatten().copied());
        let sentences = split_sentences(report);
        let audit = audit_grouping(&sentences, rules)?;
        let groups = groups_from_audit(&sentences, &audit);
        let (bundles, skipped) = build_labeled_bundles(report, &groups, &labels);
        out.bundles.extend(bundles.bundles);
        out.skipped.extend(skipped.into_iter().map(|s| (report.report_id.clone(), s)));
    }
    Ok(out)
}

pub fn featurize_bundles(bundles: &[SegmentBundle], config: &HashedFeaturizerConfig) -> Result<Vec<EmbeddingRecord>> {
    config.validate()?;
    Ok(bundles
        .iter()
        .map(|b| EmbeddingRecord::new(&b.report_id, b.segment, featurize(&b.text, config)))
        .collect())
}

/// Pairs each bundle with its vector in `index`.
pub fn examples_from_index(bundles: &[SegmentBundle], index: &EmbeddingIndex) -> Result<Vec<Example>> {
    bundles
        .iter()
        .map(|b| {
            Ok(Example {
                x: index.get(&b.key())?.to_vec(),
                labels: b.labels,
            })
        })
        .collect()
}

pub fn hashed_examples(bundles: &[SegmentBundle], config: &HashedFeaturizerConfig) -> Result<Vec<Example>> {
    config.validate()?;
    Ok(bundles
        .iter()
        .map(|b| Example {
            x: featurize(&b.text, config),
            labels: b.labels,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub seeds: Vec<u64>,
    /// Held-out test share, split once with `split_seed`.
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Frozen trunk plus adapter instead of full training.
    pub adapter: bool,
    /// Applied on top of each mode's defaults.
    pub overrides: TrainOverrides,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            test_fraction: 0.125,
            split_seed: 0,
            adapter: false,
            overrides: TrainOverrides::default(),
        }
    }
}

/// Optional replacements for [`TrainConfig`] defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub hidden_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.hidden_dim {
            c.hidden_dim = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.dropout {
            c.dropout = v;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    /// Per task, the single-task model trained for that task.
    pub single: [TrialSummary; 4],
    pub multitask: [TrialSummary; 4],
    /// Test-set macro-F1 of predicting the training majority class.
    pub baseline: [f64; 4],
    pub train_instances: usize,
    pub test_instances: usize,
}

impl ParityReport {
    pub fn rows(&self, adapter: bool) -> Vec<(String, [TrialSummary; 4])> {
        let prefix = if adapter { "Adapter " } else { "" };
        vec![
            (format!("{prefix}Single-task"), self.single),
            (format!("{prefix}Multitask"), self.multitask),
        ]
    }
}

fn majority_on(train: &[TaskLabels], test: &[TaskLabels]) -> [f64; 4] {
    std::array::from_fn(|t| {
        let task = PathologyTask::ALL[t];
        let mut freq = vec![0usize; task.arity()];
        train.iter().for_each(|l| freq[l.0[t]] += 1);
        let majority = (0..task.arity()).fold(0, |b, c| if freq[c] > freq[b] { c } else { b });
        let mut cm = ConfusionMatrix::new(task);
        test.iter().for_each(|l| cm.add(l.0[t], majority));
        macro_f1(&cm)
    })
}

/// Trains single-task models (one per task) and a multitask model for every
/// seed, all on the same stratified train/test split, and summarizes test
/// macro-F1.
pub fn compare_single_multitask(examples: &[Example], config: &TrialConfig) -> Result<ParityReport> {
    if config.seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let labels: Vec<TaskLabels> = examples.iter().map(|e| e.labels).collect();
    let (train_idx, test_idx) = stratified_split(&labels, config.test_fraction, config.split_seed)?;
    let train_set: Vec<Example> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let test_set: Vec<Example> = test_idx.iter().map(|&i| examples[i].clone()).collect();
    let train_labels: Vec<TaskLabels> = train_set.iter().map(|e| e.labels).collect();
    let test_labels: Vec<TaskLabels> = test_set.iter().map(|e| e.labels).collect();

    let (single_mode, multi_mode): (fn(PathologyTask) -> TrainMode, TrainMode) = if config.adapter {
        (TrainMode::AdapterSingle, TrainMode::AdapterMultitask)
    } else {
        (TrainMode::SingleTask, TrainMode::Multitask)
    };
    let mut single: [Vec<f64>; 4] = Default::default();
    let mut multi: [Vec<f64>; 4] = Default::default();
    for &seed in &config.seeds {
        let run = |mode: TrainMode| -> Result<[f64; 4]> {
            let cfg = config.overrides.apply(TrainConfig::for_mode(mode).with_seed(seed));
            let (params, _) = train(&train_set, &cfg)?;
            Ok(macro_f1_per_task(&evaluate(&params, &test_set)?))
        };
        let m = run(multi_mode)?;
        for t in 0..4 {
            multi[t].push(m[t]);
            single[t].push(run(single_mode(PathologyTask::ALL[t]))?[t]);
        }
        log::info!("seed {seed}: multitask {m:?}");
    }
    Ok(ParityReport {
        single: single.map(|v| TrialSummary::from_values(&v)),
        multitask: multi.map(|v| TrialSummary::from_values(&v)),
        baseline: majority_on(&train_labels, &test_labels),
        train_instances: train_set.len(),
        test_instances: test_set.len(),
    })
}
