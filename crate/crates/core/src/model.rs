//! Domain types shared across the pipeline: the motion-segment and pathology
//! label spaces, reports, sentences and per-segment classifier instances.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cervical motion segments, plus the two non-classifier buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionSegment {
    #[serde(rename = "C2-C3")]
    C2C3,
    #[serde(rename = "C3-C4")]
    C3C4,
    #[serde(rename = "C4-C5")]
    C4C5,
    #[serde(rename = "C5-C6")]
    C5C6,
    #[serde(rename = "C6-C7")]
    C6C7,
    #[serde(rename = "C7-T1")]
    C7T1,
    /// Sentences that carry no segment and are not list-item continuations.
    #[serde(rename = "NO-SEGMENT")]
    NoSegmentFound,
    /// Recognized spinal levels outside the six segments (C1-C2, thoracic, lumbar).
    #[serde(rename = "OUT-OF-SCOPE")]
    OutOfScope,
}

impl MotionSegment {
    pub const IN_SCOPE: [MotionSegment; 6] = [
        MotionSegment::C2C3,
        MotionSegment::C3C4,
        MotionSegment::C4C5,
        MotionSegment::C5C6,
        MotionSegment::C6C7,
        MotionSegment::C7T1,
    ];

    pub fn is_in_scope(self) -> bool {
        !matches!(self, MotionSegment::NoSegmentFound | MotionSegment::OutOfScope)
    }

    /// Segment whose upper vertebra is `C<upper>`; `upper` in `2..=7`.
    pub fn from_upper_cervical(upper: u32) -> Option<Self> {
        match upper {
            2..=7 => Some(Self::IN_SCOPE[(upper - 2) as usize]),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MotionSegment::C2C3 => "C2-C3",
            MotionSegment::C3C4 => "C3-C4",
            MotionSegment::C4C5 => "C4-C5",
            MotionSegment::C5C6 => "C5-C6",
            MotionSegment::C6C7 => "C6-C7",
            MotionSegment::C7T1 => "C7-T1",
            MotionSegment::NoSegmentFound => "NO-SEGMENT",
            MotionSegment::OutOfScope => "OUT-OF-SCOPE",
        }
    }
}

impl fmt::Display for MotionSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionSegment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            MotionSegment::C2C3,
            MotionSegment::C3C4,
            MotionSegment::C4C5,
            MotionSegment::C5C6,
            MotionSegment::C6C7,
            MotionSegment::C7T1,
            MotionSegment::NoSegmentFound,
            MotionSegment::OutOfScope,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::Format(format!("unknown motion segment {s:?}")))
    }
}

/// The four severity classification problems, in canonical head order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathologyTask {
    Stenosis,
    Disc,
    Cord,
    Foraminal,
}

impl PathologyTask {
    pub const ALL: [PathologyTask; 4] = [
        PathologyTask::Stenosis,
        PathologyTask::Disc,
        PathologyTask::Cord,
        PathologyTask::Foraminal,
    ];

    /// Class counts per head, in canonical order.
    pub const ARITIES: [usize; 4] = [3, 3, 2, 2];

    pub fn arity(self) -> usize {
        Self::ARITIES[self.index()]
    }

    pub fn index(self) -> usize {
        match self {
            PathologyTask::Stenosis => 0,
            PathologyTask::Disc => 1,
            PathologyTask::Cord => 2,
            PathologyTask::Foraminal => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PathologyTask::Stenosis => "stenosis",
            PathologyTask::Disc => "disc",
            PathologyTask::Cord => "cord",
            PathologyTask::Foraminal => "foraminal",
        }
    }

    /// Human-readable class names. Class 0 is always the insignificant bucket.
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            PathologyTask::Stenosis | PathologyTask::Disc => &["None/Mild", "Moderate", "Severe"],
            PathologyTask::Cord => &["None", "Mild/Severe"],
            PathologyTask::Foraminal => &["None", "Severe"],
        }
    }
}

impl fmt::Display for PathologyTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PathologyTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PathologyTask::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Format(format!("unknown pathology task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeverityLabel {
    pub task: PathologyTask,
    pub class_index: usize,
}

/// Exactly one class index per task, stored in canonical task order.
///
/// Serialized as a list of [`SeverityLabel`]. Deserialization requires every
/// task exactly once but does not range-check class indices; that is
/// reported by [`validate_corpus`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct TaskLabels(pub [usize; 4]);

impl TaskLabels {
    pub fn get(&self, task: PathologyTask) -> usize {
        self.0[task.index()]
    }

    pub fn set(&mut self, task: PathologyTask, class_index: usize) {
        self.0[task.index()] = class_index;
    }

    pub fn iter(&self) -> impl Iterator<Item = SeverityLabel> + '_ {
        PathologyTask::ALL.into_iter().map(move |task| SeverityLabel {
            task,
            class_index: self.get(task),
        })
    }

    /// First task whose class index is out of range, if any.
    pub fn check(&self) -> Result<()> {
        for label in self.iter() {
            if label.class_index >= label.task.arity() {
                return Err(Error::ClassOutOfRange {
                    task: label.task,
                    class_index: label.class_index,
                    arity: label.task.arity(),
                });
            }
        }
        Ok(())
    }
}

impl Serialize for TaskLabels {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(4))?;
        for label in self.iter() {
            seq.serialize_element(&label)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TaskLabels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LabelsVisitor;

        impl<'de> Visitor<'de> for LabelsVisitor {
            type Value = TaskLabels;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of four severity labels, one per task")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<TaskLabels, A::Error> {
                let mut seen = [false; 4];
                let mut labels = TaskLabels::default();
                while let Some(label) = seq.next_element::<SeverityLabel>()? {
                    let i = label.task.index();
                    if seen[i] {
                        return Err(de::Error::custom(format!("duplicate label for {}", label.task)));
                    }
                    seen[i] = true;
                    labels.0[i] = label.class_index;
                }
                if let Some(i) = seen.iter().position(|s| !s) {
                    return Err(de::Error::custom(format!(
                        "missing label for {}",
                        PathologyTask::ALL[i]
                    )));
                }
                Ok(labels)
            }
        }

        deserializer.deserialize_seq(LabelsVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub text: String,
    pub ocr_flag: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub report_id: String,
    pub index: usize,
    pub text: String,
    /// Byte range into the report text.
    pub span: (usize, usize),
}

/// One classifier instance: all text for a (report, segment) pair and its
/// four severity labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentBundle {
    pub report_id: String,
    pub segment: MotionSegment,
    pub text: String,
    pub labels: TaskLabels,
}

impl SegmentBundle {
    /// Key used by the embedding interchange format: `report_id|SEGMENT`.
    pub fn key(&self) -> String {
        bundle_key(&self.report_id, self.segment)
    }
}

pub fn bundle_key(report_id: &str, segment: MotionSegment) -> String {
    format!("{report_id}|{segment}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateReportId { report_id: String },
    EmptyReportText { report_id: String },
    EmptyBundleText { report_id: String, segment: MotionSegment },
    DuplicateBundle { report_id: String, segment: MotionSegment },
    UnknownReport { report_id: String, segment: MotionSegment },
    NonClassifierSegment { report_id: String, segment: MotionSegment },
    ClassOutOfRange {
        report_id: String,
        segment: MotionSegment,
        task: PathologyTask,
        class_index: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks corpus well-formedness. Violations are returned as data.
pub fn validate_corpus(reports: &[Report], bundles: &[SegmentBundle]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut ids = HashSet::with_capacity(reports.len());
    for report in reports {
        if !ids.insert(report.report_id.as_str()) {
            violations.push(Violation::DuplicateReportId {
                report_id: report.report_id.clone(),
            });
        }
        if report.text.trim().is_empty() {
            violations.push(Violation::EmptyReportText {
                report_id: report.report_id.clone(),
            });
        }
    }

    let mut seen: HashMap<(&str, MotionSegment), ()> = HashMap::with_capacity(bundles.len());
    for bundle in bundles {
        let report_id = bundle.report_id.clone();
        let segment = bundle.segment;
        if !ids.contains(bundle.report_id.as_str()) {
            violations.push(Violation::UnknownReport {
                report_id: report_id.clone(),
                segment,
            });
        }
        if seen.insert((bundle.report_id.as_str(), segment), ()).is_some() {
            violations.push(Violation::DuplicateBundle {
                report_id: report_id.clone(),
                segment,
            });
        }
        if !segment.is_in_scope() {
            violations.push(Violation::NonClassifierSegment {
                report_id: report_id.clone(),
                segment,
            });
        }
        if bundle.text.trim().is_empty() {
            violations.push(Violation::EmptyBundleText {
                report_id: report_id.clone(),
                segment,
            });
        }
        for label in bundle.labels.iter() {
            if label.class_index >= label.task.arity() {
                violations.push(Violation::ClassOutOfRange {
                    report_id: report_id.clone(),
                    segment,
                    task: label.task,
                    class_index: label.class_index,
                });
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(id: &str) -> Report {
        Report {
            report_id: id.into(),
            text: "C3-C4: Mild disc bulge.".into(),
            ocr_flag: false,
        }
    }

    fn bundle(id: &str, segment: MotionSegment, labels: [usize; 4]) -> SegmentBundle {
        SegmentBundle {
            report_id: id.into(),
            segment,
            text: "Mild disc bulge.".into(),
            labels: TaskLabels(labels),
        }
    }

    #[test]
    fn arities_in_canonical_order() {
        let arities: Vec<_> = PathologyTask::ALL.iter().map(|t| t.arity()).collect();
        assert_eq!(arities, vec![3, 3, 2, 2]);
    }

    #[test]
    fn six_in_scope_segments() {
        let names: Vec<_> = MotionSegment::IN_SCOPE.iter().map(|s| s.as_str()).collect();
        assert_eq!(names, ["C2-C3", "C3-C4", "C4-C5", "C5-C6", "C6-C7", "C7-T1"]);
        assert!(MotionSegment::IN_SCOPE.iter().all(|s| s.is_in_scope()));
        assert!(!MotionSegment::NoSegmentFound.is_in_scope());
        assert!(!MotionSegment::OutOfScope.is_in_scope());
    }

    #[test]
    fn well_formed_corpus_has_no_violations() {
        let reports = vec![report("a"), report("b")];
        let bundles = vec![
            bundle("a", MotionSegment::C3C4, [0, 1, 0, 1]),
            bundle("b", MotionSegment::C5C6, [2, 2, 1, 0]),
        ];
        assert!(validate_corpus(&reports, &bundles).is_ok());
    }

    #[test]
    fn cord_class_three_is_out_of_range() {
        let reports = vec![report("a")];
        let bundles = vec![bundle("a", MotionSegment::C3C4, [0, 0, 3, 0])];
        let v = validate_corpus(&reports, &bundles).violations;
        assert_eq!(
            v,
            vec![Violation::ClassOutOfRange {
                report_id: "a".into(),
                segment: MotionSegment::C3C4,
                task: PathologyTask::Cord,
                class_index: 3,
            }]
        );
    }

    #[test]
    fn duplicate_report_id() {
        let reports = vec![report("a"), report("a")];
        let v = validate_corpus(&reports, &[]).violations;
        assert_eq!(v, vec![Violation::DuplicateReportId { report_id: "a".into() }]);
    }

    #[test]
    fn unknown_report_and_no_segment_bundle() {
        let v = validate_corpus(&[report("a")], &[bundle("zz", MotionSegment::NoSegmentFound, [0; 4])]).violations;
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], Violation::UnknownReport { .. }));
        assert!(matches!(v[1], Violation::NonClassifierSegment { .. }));
    }

    #[test]
    fn bundle_json_layout() {
        let b = bundle("r1", MotionSegment::C7T1, [0, 2, 1, 0]);
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(
            json,
            r#"{"report_id":"r1","segment":"C7-T1","text":"Mild disc bulge.","labels":[{"task":"stenosis","class_index":0},{"task":"disc","class_index":2},{"task":"cord","class_index":1},{"task":"foraminal","class_index":0}]}"#
        );
    }

    #[test]
    fn labels_must_cover_every_task() {
        let missing = r#"{"report_id":"r","segment":"C2-C3","text":"x","labels":[{"task":"stenosis","class_index":0}]}"#;
        assert!(serde_json::from_str::<SegmentBundle>(missing).is_err());
        let dup = r#"[{"task":"cord","class_index":0},{"task":"cord","class_index":1}]"#;
        assert!(serde_json::from_str::<TaskLabels>(dup).is_err());
        // Order in the file does not matter.
        let shuffled = r#"[{"task":"cord","class_index":1},{"task":"disc","class_index":2},{"task":"foraminal","class_index":0},{"task":"stenosis","class_index":1}]"#;
        assert_eq!(serde_json::from_str::<TaskLabels>(shuffled).unwrap(), TaskLabels([1, 2, 1, 0]));
    }

    #[test]
    fn segment_names_parse() {
        for s in MotionSegment::IN_SCOPE {
            assert_eq!(s.as_str().parse::<MotionSegment>().unwrap(), s);
        }
        assert_eq!("NO-SEGMENT".parse::<MotionSegment>().unwrap(), MotionSegment::NoSegmentFound);
        assert!("C1-C2".parse::<MotionSegment>().is_err());
    }

    fn any_segment() -> impl Strategy<Value = MotionSegment> {
        (0usize..8).prop_map(|i| match i {
            6 => MotionSegment::NoSegmentFound,
            7 => MotionSegment::OutOfScope,
            i => MotionSegment::IN_SCOPE[i],
        })
    }

    proptest! {
        #[test]
        fn bundle_roundtrip(id in "[a-z0-9|_-]{1,12}", text in "\\PC{0,40}", seg in any_segment(),
                            l in prop::array::uniform4(0usize..5)) {
            let b = SegmentBundle { report_id: id, segment: seg, text, labels: TaskLabels(l) };
            let back: SegmentBundle = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
            prop_assert_eq!(back, b);
        }

        #[test]
        fn sentence_roundtrip(id in "[a-z0-9]{1,8}", text in "\\PC{0,40}", index in 0usize..100,
                              start in 0usize..1000, len in 0usize..100, ocr in any::<bool>()) {
            let s = Sentence { report_id: id.clone(), index, text: text.clone(), span: (start, start + len) };
            let back: Sentence = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
            prop_assert_eq!(back, s);
            let r = Report { report_id: id, text, ocr_flag: ocr };
            let back: Report = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
