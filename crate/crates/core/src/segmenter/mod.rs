//! Deterministic report segmenter: sentence splitting, motion-segment
//! tagging and per-segment grouping.

mod grouping;
mod sentences;
mod tagger;

pub use grouping::{
    audit_grouping, build_bundles, build_labeled_bundles, group_sentences, groups_from_audit, labels_from_bundles, AssignmentRule, AuditEntry,
    GroupingRuleConfig, ReportBundles, SegmentLabels, DEFAULT_HEADER_PATTERN, DEFAULT_HEADING_PATTERN,
};
pub use sentences::split_sentences;
pub use tagger::{tag_mentions, tag_text, SegmentMention};

use crate::error::Result;
use crate::model::Report;

/// Full segmentation of one report: split, tag, group, bundle.
pub fn segment_report(
    report: &Report,
    config: &GroupingRuleConfig,
    labels: &SegmentLabels,
) -> Result<(ReportBundles, Vec<AuditEntry>)> {
    let sentences = split_sentences(report);
    let audit = audit_grouping(&sentences, config)?;
    let groups = groups_from_audit(&sentences, &audit);
    Ok((build_bundles(report, &groups, labels)?, audit))
}
