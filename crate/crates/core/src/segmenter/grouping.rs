use std::collections::{BTreeMap, BTreeSet, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::tagger::tag_mentions;
use crate::error::{Error, Result};
use crate::model::{MotionSegment, PathologyTask, Report, SegmentBundle, Sentence, TaskLabels};

/// Default list-item header: an optional enumerator, then a level token and a colon.
pub const DEFAULT_HEADER_PATTERN: &str =
    r"(?i)^\s*(?:\d{1,2}[.)]\s*)?(?:level\s+)?[c(]?\d{1,2}\s*(?:[-_/~–]\s*)?[ct]?\d{1,2}\s*:";

/// Default document heading: a whole line of capitals ending in a colon,
/// such as `FINDINGS:`. Headings never receive carried-forward segments.
pub const DEFAULT_HEADING_PATTERN: &str = r"^\s*[A-Z][A-Z /&]*:\s*$";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingRuleConfig {
    pub carry_forward: bool,
    pub header_pattern: String,
    pub heading_pattern: String,
}

impl Default for GroupingRuleConfig {
    fn default() -> Self {
        Self {
            carry_forward: true,
            header_pattern: DEFAULT_HEADER_PATTERN.to_string(),
            heading_pattern: DEFAULT_HEADING_PATTERN.to_string(),
        }
    }
}

impl GroupingRuleConfig {
    /// Compiled `(header, heading)` patterns.
    pub fn compile(&self) -> Result<(Regex, Regex)> {
        let header = Regex::new(&self.header_pattern)
            .map_err(|e| Error::InvalidConfig(format!("header_pattern: {e}")))?;
        let heading = Regex::new(&self.heading_pattern)
            .map_err(|e| Error::InvalidConfig(format!("heading_pattern: {e}")))?;
        Ok((header, heading))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    Mention,
    CarryForward,
    NoSegment,
}

/// Why a sentence landed where it did. One entry per sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub report_id: String,
    pub sentence_index: usize,
    pub span: (usize, usize),
    pub text: String,
    pub segments: Vec<MotionSegment>,
    pub rule: AssignmentRule,
    pub header: bool,
}

/// Assigns every sentence to one or more groups.
pub fn audit_grouping(sentences: &[Sentence], config: &GroupingRuleConfig) -> Result<Vec<AuditEntry>> {
    let (header, heading) = config.compile()?;
    let mut out: Vec<AuditEntry> = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        let mentioned: BTreeSet<MotionSegment> =
            tag_mentions(sentence).into_iter().map(|m| m.canonical).collect();
        let is_header = header.is_match(&sentence.text);
        let (segments, rule) = if !mentioned.is_empty() {
            (mentioned.into_iter().collect(), AssignmentRule::Mention)
        } else if heading.is_match(&sentence.text) {
            (vec![MotionSegment::NoSegmentFound], AssignmentRule::NoSegment)
        } else {
            match out.last() {
                Some(prev) if config.carry_forward && prev.header => {
                    (prev.segments.clone(), AssignmentRule::CarryForward)
                }
                _ => (vec![MotionSegment::NoSegmentFound], AssignmentRule::NoSegment),
            }
        };
        out.push(AuditEntry {
            report_id: sentence.report_id.clone(),
            sentence_index: sentence.index,
            span: sentence.span,
            text: sentence.text.clone(),
            segments,
            rule,
            header: is_header,
        });
    }
    Ok(out)
}

/// Groups sentences by motion segment, preserving document order in each group.
pub fn group_sentences(
    sentences: &[Sentence],
    config: &GroupingRuleConfig,
) -> Result<BTreeMap<MotionSegment, Vec<Sentence>>> {
    let audit = audit_grouping(sentences, config)?;
    Ok(groups_from_audit(sentences, &audit))
}

pub fn groups_from_audit(sentences: &[Sentence], audit: &[AuditEntry]) -> BTreeMap<MotionSegment, Vec<Sentence>> {
    let mut groups: BTreeMap<MotionSegment, Vec<Sentence>> = BTreeMap::new();
    for (sentence, entry) in sentences.iter().zip(audit) {
        for &segment in &entry.segments {
            groups.entry(segment).or_default().push(sentence.clone());
        }
    }
    groups
}

/// Gold labels for one report, keyed per (segment, task).
pub type SegmentLabels = HashMap<(MotionSegment, PathologyTask), usize>;

pub fn labels_from_bundles<'a>(bundles: impl IntoIterator<Item = &'a SegmentBundle>) -> SegmentLabels {
    let mut out = SegmentLabels::new();
    for b in bundles {
        for l in b.labels.iter() {
            out.insert((b.segment, l.task), l.class_index);
        }
    }
    out
}

/// Bundles built from one report's groups.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportBundles {
    /// Classifier instances, one per in-scope segment, in anatomical order.
    pub bundles: Vec<SegmentBundle>,
    /// Concatenated text of the "No motion segments found" group. Never a
    /// classifier instance.
    pub no_segment_text: Option<String>,
    pub out_of_scope_text: Option<String>,
}

fn join(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn build_bundles(
    report: &Report,
    groups: &BTreeMap<MotionSegment, Vec<Sentence>>,
    labels: &SegmentLabels,
) -> Result<ReportBundles> {
    bundles_impl(report, groups, labels, true).map(|(b, _)| b)
}

/// Like [`build_bundles`], but segment groups without complete gold labels
/// are skipped and returned instead of failing the report.
pub fn build_labeled_bundles(
    report: &Report,
    groups: &BTreeMap<MotionSegment, Vec<Sentence>>,
    labels: &SegmentLabels,
) -> (ReportBundles, Vec<MotionSegment>) {
    bundles_impl(report, groups, labels, false).expect("lenient bundling does not fail")
}

fn bundles_impl(
    report: &Report,
    groups: &BTreeMap<MotionSegment, Vec<Sentence>>,
    labels: &SegmentLabels,
    strict: bool,
) -> Result<(ReportBundles, Vec<MotionSegment>)> {
    let mut out = ReportBundles::default();
    let mut skipped = Vec::new();
    'groups: for (&segment, sentences) in groups {
        match segment {
            MotionSegment::NoSegmentFound => out.no_segment_text = Some(join(sentences)),
            MotionSegment::OutOfScope => out.out_of_scope_text = Some(join(sentences)),
            _ => {
                let mut task_labels = TaskLabels::default();
                for task in PathologyTask::ALL {
                    match labels.get(&(segment, task)) {
                        Some(class) => task_labels.set(task, *class),
                        None if strict => {
                            return Err(Error::IncompleteLabels {
                                report_id: report.report_id.clone(),
                                segment,
                                task,
                            })
                        }
                        None => {
                            skipped.push(segment);
                            continue 'groups;
                        }
                    }
                }
                out.bundles.push(SegmentBundle {
                    report_id: report.report_id.clone(),
                    segment,
                    text: join(sentences),
                    labels: task_labels,
                });
            }
        }
    }
    Ok((out, skipped))
}
