//! Per-motion-segment pathology severity extraction for cervical spine MRI
//! reports.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`segmenter`]: sentence splitting, motion-segment tagging with spelling
//!   normalization, and grouping of sentences per segment.
//! - [`features`]: a hashed n-gram featurizer and the binary embedding
//!   interchange format used for externally produced vectors.
//! - [`mtl`]: shared trunk with four severity heads (widths `[3, 3, 2, 2]`),
//!   bottleneck adapters, exact gradients and an AdamW training loop.
//! - [`similarity`]: sliced 2-Wasserstein distances between label-conditional
//!   embedding clouds and the diameter bound.
//! - [`eval`]: macro F1, stratified splitting, multi-seed trials and the
//!   inference walltime benchmark.
//! - [`pipeline`]: corpus-to-examples glue and the single-task versus
//!   multitask comparison.
//! - [`synth`]: a labeled synthetic report generator with OCR noise.

pub mod error;
pub mod eval;
pub mod features;
pub mod hashing;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod mtl;
pub mod segmenter;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    validate_corpus, MotionSegment, PathologyTask, Report, SegmentBundle, Sentence,
    SeverityLabel, TaskLabels, ValidationReport, Violation,
};
pub use mtl::{MtlParams, TaskLogits, TrainConfig, TrainMode};
pub use similarity::{ConditionalCloud, SwConfig, TaskDistanceMatrix};
