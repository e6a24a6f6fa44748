//! Labeled synthetic cervical spine reports.
//!
//! Every report lists four to six in-scope motion segments (plus, sometimes,
//! C1-C2) in the layout of one of several practice styles. Per-segment labels
//! follow the configured class marginals exactly (largest-remainder quotas
//! over all generated segments) and are coupled across tasks through a
//! shared latent severity, so a segment with severe canal stenosis tends to
//! carry a large disc and cord compression too. Findings are rendered from
//! class-specific phrase banks, several pathologies per sentence.
//!
//! Gold bundles and sentence assignments are recorded from the clean text;
//! a fraction of reports then goes through [`inject_ocr_noise`].

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::model::{MotionSegment, PathologyTask, Report, SegmentBundle, TaskLabels};
use crate::segmenter::tag_text;

/// Training-split label counts per task, in class order.
pub const REFERENCE_COUNTS: [&[u64]; 4] = [&[5488, 561, 178], &[2731, 2699, 797], &[5702, 525], &[5262, 965]];

pub fn reference_marginals() -> Vec<Vec<f64>> {
    REFERENCE_COUNTS
        .iter()
        .map(|c| {
            let total: u64 = c.iter().sum();
            c.iter().map(|&v| v as f64 / total as f64).collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub from: String,
    pub to: String,
}

fn default_confusions() -> Vec<ConfusionPair> {
    let symmetric = [
        ('0', 'O'),
        ('1', 'l'),
        ('2', 'Z'),
        ('3', '8'),
        ('4', 'A'),
        ('5', 'S'),
        ('6', 'b'),
        ('8', 'B'),
        ('9', 'g'),
        ('-', '~'),
        ('C', '('),
        ('e', 'c'),
        ('i', 'l'),
    ];
    let mut out: Vec<ConfusionPair> = symmetric
        .iter()
        .flat_map(|&(a, b)| {
            [
                ConfusionPair {
                    from: a.into(),
                    to: b.into(),
                },
                ConfusionPair {
                    from: b.into(),
                    to: a.into(),
                },
            ]
        })
        .collect();
    out.push(ConfusionPair {
        from: "7".into(),
        to: "1".into(),
    });
    out.push(ConfusionPair {
        from: "rn".into(),
        to: "m".into(),
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrNoiseConfig {
    pub char_sub_rate: f64,
    pub char_drop_rate: f64,
    /// Substitutions tried first; a character with no pair becomes a random
    /// lowercase letter.
    pub confusion_pairs: Vec<ConfusionPair>,
    pub seed: u64,
}

impl Default for OcrNoiseConfig {
    fn default() -> Self {
        Self {
            char_sub_rate: 0.02,
            char_drop_rate: 0.01,
            confusion_pairs: default_confusions(),
            seed: 0,
        }
    }
}

impl OcrNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("char_sub_rate", self.char_sub_rate), ("char_drop_rate", self.char_drop_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("{name} {r} not in [0, 1)")));
            }
        }
        if self.confusion_pairs.iter().any(|p| p.from.is_empty() || p.to.chars().count() > p.from.chars().count()) {
            return Err(Error::InvalidConfig("confusion pairs must not lengthen the text".into()));
        }
        Ok(())
    }
}

/// One corruption. `offset` is the byte offset in the clean text; a drop has
/// an empty `replacement`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEvent {
    pub offset: usize,
    pub original: String,
    pub replacement: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisedText {
    pub text: String,
    pub events: Vec<NoiseEvent>,
}

/// Character substitutions and drops with the generator seeded from
/// `config.seed`. See [`inject_ocr_noise_with`].
pub fn inject_ocr_noise(text: &str, config: &OcrNoiseConfig) -> NoisedText {
    inject_ocr_noise_with(text, config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Newlines are never touched. Each motion-segment token of the clean text
/// takes at most one corruption, and the output keeps at least 95% of the
/// input characters.
pub fn inject_ocr_noise_with<R: Rng + ?Sized>(text: &str, config: &OcrNoiseConfig, rng: &mut R) -> NoisedText {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let token_spans: Vec<(usize, usize)> = tag_text(text).into_iter().map(|m| m.span).collect();
    let mut token_hit = vec![false; token_spans.len()];
    let token_of = |offset: usize| token_spans.iter().position(|&(s, e)| offset >= s && offset < e);
    let mut shrink_budget = chars.len() / 20;
    let mut out = String::with_capacity(text.len());
    let mut events = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let (offset, c) = chars[k];
        let token = token_of(offset);
        let protected = c == '\n' || token.is_some_and(|t| token_hit[t]);
        let drop_roll: f64 = rng.random();
        let sub_roll: f64 = rng.random();
        if protected {
            out.push(c);
            k += 1;
            continue;
        }
        if drop_roll < config.char_drop_rate && shrink_budget > 0 {
            shrink_budget -= 1;
            events.push(NoiseEvent {
                offset,
                original: c.to_string(),
                replacement: String::new(),
            });
            if let Some(t) = token {
                token_hit[t] = true;
            }
            k += 1;
            continue;
        }
        if sub_roll < config.char_sub_rate {
            let rest = &text[offset..];
            let options: Vec<&ConfusionPair> = config
                .confusion_pairs
                .iter()
                .filter(|p| rest.starts_with(p.from.as_str()))
                .filter(|p| p.from.chars().count() - p.to.chars().count() <= shrink_budget)
                .collect();
            let (from_len, replacement) = match options.choose(rng) {
                Some(p) => (p.from.chars().count(), p.to.clone()),
                None if !c.is_whitespace() => {
                    let mut r = rng.random_range(b'a'..=b'z') as char;
                    if r == c {
                        r = if r == 'z' { 'a' } else { (r as u8 + 1) as char };
                    }
                    (1, r.to_string())
                }
                None => (1, c.to_string()),
            };
            if replacement != text[offset..chars.get(k + from_len).map_or(text.len(), |c| c.0)] {
                shrink_budget -= from_len - replacement.chars().count();
                let end = chars.get(k + from_len).map_or(text.len(), |c| c.0);
                events.push(NoiseEvent {
                    offset,
                    original: text[offset..end].to_string(),
                    replacement: replacement.clone(),
                });
                if let Some(t) = token {
                    token_hit[t] = true;
                }
                out.push_str(&replacement);
                k += from_len;
                continue;
            }
        }
        out.push(c);
        k += 1;
    }
    NoisedText { text: out, events }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_reports: usize,
    /// Number of distinct practice styles in use (at most [`MAX_PRACTICES`]).
    pub practices: usize,
    pub ocr_fraction: f64,
    /// Per task, per class probabilities in canonical order.
    pub class_marginals: Vec<Vec<f64>>,
    pub noise: OcrNoiseConfig,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_reports: 1578,
            practices: 10,
            ocr_fraction: 0.2,
            class_marginals: reference_marginals(),
            noise: OcrNoiseConfig::default(),
            seed: 0,
        }
    }
}

pub const MAX_PRACTICES: usize = 25;

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.practices == 0 || self.practices > MAX_PRACTICES {
            return Err(Error::InvalidConfig(format!("practices must be in 1..={MAX_PRACTICES}")));
        }
        if !(0.0..=1.0).contains(&self.ocr_fraction) {
            return Err(Error::InvalidConfig(format!("ocr_fraction {} not in [0, 1]", self.ocr_fraction)));
        }
        if self.class_marginals.len() != 4 {
            return Err(Error::InvalidConfig("class_marginals needs one row per task".into()));
        }
        for (task, row) in PathologyTask::ALL.iter().zip(&self.class_marginals) {
            let sum: f64 = row.iter().sum();
            if row.len() != task.arity() || row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "class_marginals for {task} must be {} non-negative values summing to 1",
                    task.arity()
                )));
            }
        }
        self.noise.validate()
    }
}

/// The segments a generated sentence belongs to under the clean text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAssignment {
    pub report_id: String,
    pub sentence_index: usize,
    pub text: String,
    pub segments: Vec<MotionSegment>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub report_id: String,
    pub practice: usize,
    pub style: String,
    pub spelling: String,
    /// Present for noised reports only.
    pub clean_text: Option<String>,
    pub noise: Vec<NoiseEvent>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub reports: Vec<Report>,
    pub bundles: Vec<SegmentBundle>,
    pub assignments: Vec<GoldAssignment>,
    pub provenance: Vec<ReportProvenance>,
}

impl SynthCorpus {
    /// Clean text of a report (the noised text is in `reports`).
    pub fn clean_text(&self, i: usize) -> &str {
        self.provenance[i].clean_text.as_deref().unwrap_or(&self.reports[i].text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Style {
    List,
    Numbered,
    Level,
    Prose,
    SplitHeader,
}

const STYLES: [Style; 5] = [Style::List, Style::Numbered, Style::Level, Style::Prose, Style::SplitHeader];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Spelling {
    Full,
    Short,
    Slash,
    Underscore,
    Concatenated,
}

const SPELLINGS: [Spelling; 5] =
    [Spelling::Full, Spelling::Short, Spelling::Slash, Spelling::Underscore, Spelling::Concatenated];

fn practice(p: usize) -> (Style, Spelling) {
    (STYLES[p % 5], SPELLINGS[(p + p / 5) % 5])
}

fn spell(seg: MotionSegment, spelling: Spelling) -> String {
    let canonical = seg.as_str();
    let (upper, lower) = canonical.split_once('-').expect("level pair");
    let lower_digits = &lower[1..];
    let same_region = lower.starts_with('C');
    match spelling {
        Spelling::Full => canonical.to_string(),
        Spelling::Short if same_region => format!("{upper}-{lower_digits}"),
        Spelling::Short => canonical.to_string(),
        Spelling::Slash if same_region => format!("{upper}/{lower_digits}"),
        Spelling::Slash => format!("{upper}/{lower}"),
        Spelling::Underscore => format!("{upper}_{lower}"),
        Spelling::Concatenated if same_region => format!("{upper}{lower_digits}"),
        Spelling::Concatenated => format!("{upper}{lower}"),
    }
}

const STENOSIS: [&[&str]; 3] = [
    &[
        "no significant spinal canal stenosis",
        "a patent central canal",
        "no canal narrowing",
        "mild canal narrowing",
        "minimal spinal canal stenosis",
        "no central stenosis",
        "mild effacement of the ventral thecal sac",
        "an adequate canal diameter",
    ],
    &[
        "moderate spinal canal stenosis",
        "moderate central canal narrowing",
        "moderate canal stenosis with effacement of the CSF",
        "moderate narrowing of the spinal canal",
        "moderate central stenosis",
        "moderate canal compromise",
        "canal narrowing of moderate degree",
        "moderate thecal sac narrowing",
    ],
    &[
        "severe spinal canal stenosis",
        "severe central canal narrowing",
        "severe canal stenosis with cord flattening",
        "marked spinal canal narrowing",
        "severe central stenosis",
        "high-grade canal stenosis",
        "critical canal narrowing",
        "severe narrowing of the spinal canal",
    ],
];

const DISC: [&[&str]; 3] = [
    &[
        "no disc bulge",
        "a minimal disc bulge",
        "a mild disc bulge",
        "a small disc osteophyte complex",
        "mild disc desiccation",
        "trace disc bulging",
        "no disc herniation",
        "a mild annular bulge",
    ],
    &[
        "a moderate disc bulge",
        "a broad-based disc protrusion",
        "a moderate disc osteophyte complex",
        "a central disc protrusion",
        "a moderate posterior disc bulge",
        "a focal disc protrusion",
        "a moderate disc herniation",
        "a left paracentral disc protrusion",
    ],
    &[
        "a large disc extrusion",
        "a severe disc osteophyte complex",
        "a large central disc herniation",
        "a severe disc herniation",
        "a large disc protrusion",
        "a sequestered disc fragment",
        "a large broad-based disc extrusion",
        "a prominent disc osteophyte complex",
    ],
];

const CORD: [&[&str]; 2] = [
    &[
        "no cord compression",
        "the cord is normal in caliber",
        "no cord signal abnormality",
        "no cord deformity",
        "normal cord signal",
        "the cord is not compressed",
        "no mass effect on the cord",
        "no myelomalacia",
    ],
    &[
        "there is cord compression",
        "there is mild cord flattening",
        "there is signal change within the cord",
        "there is deformity of the cord",
        "there is cord impingement",
        "there is hyperintense cord signal",
        "there is mass effect on the cord",
        "there is flattening of the ventral cord",
    ],
];

const FORAMINAL: [&[&str]; 2] = [
    &[
        "no foraminal narrowing",
        "patent neural foramina",
        "mild bilateral foraminal narrowing",
        "mild left foraminal stenosis",
        "moderate right foraminal narrowing",
        "minimal foraminal narrowing",
        "the foramina are patent",
        "moderate bilateral neural foraminal stenosis",
    ],
    &[
        "severe bilateral foraminal stenosis",
        "severe left neural foraminal narrowing",
        "severe right foraminal stenosis",
        "marked bilateral foraminal narrowing",
        "severe foraminal compromise",
        "high-grade right foraminal stenosis",
        "severe uncovertebral hypertrophy narrowing the left foramen",
        "severe left neuroforaminal stenosis",
    ],
];

const CONNECTORS: [&str; 4] = ["causing", "resulting in", "producing", "with"];

const GENERAL: [&str; 10] = [
    "The cervical lordosis is straightened.",
    "Vertebral body heights are maintained.",
    "No marrow signal abnormality.",
    "The craniocervical junction is normal.",
    "Paraspinal soft tissues are unremarkable.",
    "Alignment is normal.",
    "There is mild reversal of the normal lordosis.",
    "No fracture or subluxation is identified.",
    "Bone marrow signal is within normal limits.",
    "The visualized posterior fossa is unremarkable.",
];

const TITLES: [&str; 3] = [
    "MRI CERVICAL SPINE WITHOUT CONTRAST",
    "EXAM: MRI of the cervical spine",
    "MR CERVICAL SPINE WO CONTRAST",
];

const HISTORIES: [&str; 4] = [
    "CLINICAL HISTORY: Neck pain.",
    "INDICATION: Radiculopathy.",
    "HISTORY: Neck pain radiating to the left arm.",
    "INDICATION: Cervicalgia.",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// `(text, segments)` for each sentence, grouped into lines.
type Lines = Vec<Vec<(String, Vec<MotionSegment>)>>;

struct Clauses {
    /// Disc and canal findings, joined into one clause.
    primary: Option<String>,
    /// Cord and foraminal findings.
    secondary: Option<String>,
}

fn render_clauses<R: Rng + ?Sized>(labels: &TaskLabels, rng: &mut R) -> Clauses {
    let pick = |bank: &[&str], rng: &mut R| bank.choose(rng).expect("non-empty bank").to_string();
    // Class-0 findings are left unmentioned now and then.
    let keep = |class: usize, rng: &mut R| class > 0 || rng.random::<f64>() < 0.7;
    let [s, d, c, f] = labels.0;
    let disc = keep(d, rng).then(|| pick(DISC[d], rng));
    let canal = keep(s, rng).then(|| pick(STENOSIS[s], rng));
    let cord = keep(c, rng).then(|| pick(CORD[c], rng));
    let foramen = keep(f, rng).then(|| pick(FORAMINAL[f], rng));
    let primary = match (disc, canal) {
        (Some(disc), Some(canal)) => {
            let connector = if s == 0 { "with" } else { CONNECTORS.choose(rng).unwrap() };
            Some(format!("{disc} {connector} {canal}"))
        }
        (a, b) => a.or(b),
    };
    let secondary = match (cord, foramen) {
        (Some(c), Some(f)) => Some(format!("{c}, and {f}")),
        (a, b) => a.or(b),
    };
    Clauses { primary, secondary }
}

fn section_sentences<R: Rng + ?Sized>(
    seg: MotionSegment,
    labels: &TaskLabels,
    style: Style,
    spelling: Spelling,
    number: usize,
    rng: &mut R,
) -> Vec<Vec<(String, Vec<MotionSegment>)>> {
    let token = spell(seg, spelling);
    let cl = render_clauses(labels, rng);
    let segs = vec![seg];
    let body_one = match (&cl.primary, &cl.secondary) {
        (Some(a), Some(b)) => format!("{a}; {b}"),
        (Some(a), None) | (None, Some(a)) => a.clone(),
        (None, None) => "no significant abnormality".into(),
    };
    let two = |head: String| -> Vec<(String, Vec<MotionSegment>)> {
        match (&cl.primary, &cl.secondary) {
            (Some(a), Some(b)) => vec![
                (format!("{head} {}.", capitalize(a)), segs.clone()),
                (format!("{}.", capitalize(b)), segs.clone()),
            ],
            _ => vec![(format!("{head} {}.", capitalize(&body_one)), segs.clone())],
        }
    };
    match style {
        Style::List => vec![two(format!("{token}:"))],
        Style::Numbered => vec![two(format!("{number}. {token}:"))],
        Style::Level => vec![vec![(format!("Level {token}: {}.", capitalize(&body_one)), segs)]],
        Style::Prose => {
            let s = if cl.primary.is_some() && rng.random::<bool>() {
                format!("At {token}, there is {body_one}.")
            } else {
                format!("{} at {token}.", capitalize(&body_one))
            };
            vec![vec![(s, segs)]]
        }
        Style::SplitHeader => vec![
            vec![(format!("{token}:"), segs.clone())],
            vec![(format!("{}.", capitalize(&body_one)), segs)],
        ],
    }
}

fn impression<R: Rng + ?Sized>(sections: &[(MotionSegment, TaskLabels)], spelling: Spelling, rng: &mut R) -> Vec<(String, Vec<MotionSegment>)> {
    let mut out = Vec::new();
    for (class, word) in [(2, "Severe"), (1, "Moderate")] {
        let segs: Vec<MotionSegment> = sections.iter().filter(|(_, l)| l.0[0] == class).map(|(s, _)| *s).collect();
        if !segs.is_empty() {
            let names: Vec<String> = segs.iter().map(|&s| spell(s, spelling)).collect();
            out.push((format!("{word} spinal canal stenosis at {}.", names.join(" and ")), segs));
        }
    }
    let cord: Vec<MotionSegment> = sections.iter().filter(|(_, l)| l.0[2] == 1).map(|(s, _)| *s).collect();
    if !cord.is_empty() && rng.random::<f64>() < 0.8 {
        let names: Vec<String> = cord.iter().map(|&s| spell(s, spelling)).collect();
        out.push((format!("Cord compression at {}.", names.join(" and ")), cord));
    }
    if out.is_empty() {
        let worst = sections
            .iter()
            .max_by_key(|(_, l)| (l.0.iter().sum::<usize>(), std::cmp::Reverse(l.0[0])))
            .map(|(s, _)| *s)
            .expect("at least one section");
        if rng.random::<bool>() {
            out.push((
                format!("Mild degenerative change, most pronounced at {}.", spell(worst, spelling)),
                vec![worst],
            ));
        } else {
            out.push(("No high-grade spinal canal stenosis.".into(), vec![MotionSegment::NoSegmentFound]));
        }
    }
    out
}

fn largest_remainder(probs: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let missing = total - counts.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        counts[c] += 1;
    }
    counts
}

/// Severity offset per level: mid-cervical levels degenerate most.
fn level_offset(seg: MotionSegment) -> f64 {
    match seg {
        MotionSegment::C2C3 => -0.5,
        MotionSegment::C3C4 => 0.0,
        MotionSegment::C4C5 => 0.2,
        MotionSegment::C5C6 => 0.5,
        MotionSegment::C6C7 => 0.3,
        _ => -0.4,
    }
}

/// How strongly each task's score follows the shared latent severity.
const TASK_NOISE: f64 = 0.6;

fn assign_labels(segments: &[MotionSegment], marginals: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<TaskLabels> {
    let n = segments.len();
    let latent: Vec<f64> = segments
        .iter()
        .map(|&s| {
            let e: f64 = StandardNormal.sample(rng);
            e + level_offset(s)
        })
        .collect();
    let mut labels = vec![TaskLabels::default(); n];
    for (t, probs) in marginals.iter().enumerate() {
        let scores: Vec<f64> = latent
            .iter()
            .map(|z| {
                let e: f64 = StandardNormal.sample(rng);
                z + TASK_NOISE * e
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let counts = largest_remainder(probs, n);
        let mut pos = 0;
        for (class, &count) in counts.iter().enumerate() {
            for &i in &order[pos..pos + count] {
                labels[i].0[t] = class;
            }
            pos += count;
        }
    }
    labels
}

fn choose_segments(rng: &mut ChaCha8Rng) -> (Vec<MotionSegment>, bool) {
    let roll: f64 = rng.random();
    let k = if roll < 0.6 {
        4
    } else if roll < 0.9 {
        5
    } else {
        6
    };
    let mut segs: Vec<MotionSegment> = MotionSegment::IN_SCOPE.choose_multiple(rng, k).copied().collect();
    segs.sort();
    (segs, rng.random::<f64>() < 0.3)
}

fn layout<R: Rng + ?Sized>(
    sections: &[(MotionSegment, TaskLabels)],
    upper_cervical: bool,
    style: Style,
    spelling: Spelling,
    rng: &mut R,
) -> Lines {
    let mut lines: Lines = Vec::new();
    lines.push(vec![(TITLES.choose(rng).unwrap().to_string(), vec![MotionSegment::NoSegmentFound])]);
    lines.push(vec![(HISTORIES.choose(rng).unwrap().to_string(), vec![MotionSegment::NoSegmentFound])]);
    lines.push(vec![("FINDINGS:".into(), vec![MotionSegment::NoSegmentFound])]);
    let n_general = rng.random_range(1..=3);
    let general: Vec<(String, Vec<MotionSegment>)> = GENERAL
        .choose_multiple(rng, n_general)
        .map(|s| (s.to_string(), vec![MotionSegment::NoSegmentFound]))
        .collect();
    lines.push(general);

    let mut body: Lines = Vec::new();
    let mut number = 1;
    if upper_cervical {
        let token = spell(MotionSegment::C3C4, spelling).replace('3', "1").replace('4', "2");
        let text = match style {
            Style::Prose => format!("No significant abnormality at {token}."),
            Style::Numbered => format!("{number}. {token}: No significant abnormality."),
            Style::Level => format!("Level {token}: No significant abnormality."),
            _ => format!("{token}: No significant abnormality."),
        };
        body.push(vec![(text, vec![MotionSegment::OutOfScope])]);
        number += 1;
    }
    for (seg, labels) in sections {
        body.extend(section_sentences(*seg, labels, style, spelling, number, rng));
        number += 1;
    }
    if style == Style::Prose {
        lines.push(body.into_iter().flatten().collect());
    } else {
        lines.extend(body);
    }
    lines.push(vec![("IMPRESSION:".into(), vec![MotionSegment::NoSegmentFound])]);
    for s in impression(sections, spelling, rng) {
        lines.push(vec![s]);
    }
    lines
}

/// Generates a corpus. Deterministic per `config.seed`.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut structure_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let plans: Vec<(usize, Vec<MotionSegment>, bool)> = (0..config.n_reports)
        .map(|_| {
            let p = structure_rng.random_range(0..config.practices);
            let (segs, upper) = choose_segments(&mut structure_rng);
            (p, segs, upper)
        })
        .collect();
    let all_segments: Vec<MotionSegment> = plans.iter().flat_map(|(_, s, _)| s.iter().copied()).collect();
    let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let labels = assign_labels(&all_segments, &config.class_marginals, &mut label_rng);

    let n_ocr = (config.ocr_fraction * config.n_reports as f64).round() as usize;
    let mut noisy: Vec<bool> = (0..config.n_reports).map(|i| i < n_ocr).collect();
    noisy.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3)));

    let mut corpus = SynthCorpus::default();
    let width = config.n_reports.max(1).to_string().len().max(5);
    let mut label_iter = labels.into_iter();
    for (i, (p, segs, upper)) in plans.into_iter().enumerate() {
        let report_id = format!("rpt-{i:0width$}");
        let (style, spelling) = practice(p);
        let sections: Vec<(MotionSegment, TaskLabels)> =
            segs.iter().map(|&s| (s, label_iter.next().expect("one label per segment"))).collect();
        let mut text_rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(config.seed, 4), i as u64));
        let lines = layout(&sections, upper, style, spelling, &mut text_rng);

        let mut text = String::new();
        let mut sentence_index = 0;
        let mut seg_text: Vec<Vec<String>> = vec![Vec::new(); sections.len()];
        for line in &lines {
            let joined: Vec<&str> = line.iter().map(|(s, _)| s.as_str()).collect();
            text.push_str(&joined.join(" "));
            text.push('\n');
            for (s, assigned) in line {
                for seg in assigned {
                    if let Some(k) = sections.iter().position(|(x, _)| x == seg) {
                        seg_text[k].push(s.clone());
                    }
                }
                corpus.assignments.push(GoldAssignment {
                    report_id: report_id.clone(),
                    sentence_index,
                    text: s.clone(),
                    segments: assigned.clone(),
                });
                sentence_index += 1;
            }
        }
        for ((seg, l), texts) in sections.iter().zip(seg_text) {
            corpus.bundles.push(SegmentBundle {
                report_id: report_id.clone(),
                segment: *seg,
                text: texts.join(" "),
                labels: *l,
            });
        }

        let (report_text, clean_text, noise) = if noisy[i] {
            let cfg = OcrNoiseConfig {
                seed: derive_seed(derive_seed(config.seed, 5), i as u64),
                ..config.noise.clone()
            };
            let n = inject_ocr_noise(&text, &cfg);
            (n.text, Some(text), n.events)
        } else {
            (text, None, Vec::new())
        };
        corpus.reports.push(Report {
            report_id: report_id.clone(),
            text: report_text,
            ocr_flag: noisy[i],
        });
        corpus.provenance.push(ReportProvenance {
            report_id,
            practice: p,
            style: format!("{style:?}").to_lowercase(),
            spelling: format!("{spelling:?}").to_lowercase(),
            clean_text,
            noise,
        });
    }
    Ok(corpus)
}

/// Per task, per class label counts of `bundles`.
pub fn label_counts(bundles: &[SegmentBundle]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = PathologyTask::ALL.iter().map(|t| vec![0; t.arity()]).collect();
    for b in bundles {
        for (t, &c) in b.labels.0.iter().enumerate() {
            out[t][c] += 1;
        }
    }
    out
}
