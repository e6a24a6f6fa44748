//! Motion-segment mention tagger.
//!
//! Recognized spellings (case-insensitive): `C3-C4`, `C3-4`, `C3/4`, `C3_C4`,
//! `C34`, `C7-T1`, plus `–`, `~`, `=` or `.` as separators and spaces around
//! a separator. Lumbar and thoracic levels (`L4-5`, `T12-L1`, `L5-S1`) and
//! C1-C2 map to [`MotionSegment::OutOfScope`]. Non-adjacent cervical pairs
//! such as `C2-C7` are consumed but produce no mention.
//!
//! The digit slots also accept the usual OCR look-alikes (`l`/`I`/`|` for 1,
//! `O` for 0, `S` for 5, `B` for 8, ...) provided the token still contains at
//! least one real digit, and either letter may be missing when the other one
//! (and a separator) survives: `3-C4`, `C3-(4` and `C3C4` all tag C3-C4.

use serde::{Deserialize, Serialize};

use crate::model::{MotionSegment, Sentence};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMention {
    pub raw: String,
    pub canonical: MotionSegment,
    /// Byte range within the sentence text.
    pub span: (usize, usize),
}

pub fn tag_mentions(sentence: &Sentence) -> Vec<SegmentMention> {
    tag_text(&sentence.text)
}

/// Tags an arbitrary string. Spans are byte offsets into `text`.
pub fn tag_text(text: &str) -> Vec<SegmentMention> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |k: usize| chars.get(k).map_or(text.len(), |c| c.0);
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let at_word_start = k == 0 || !chars[k - 1].1.is_alphanumeric();
        if at_word_start {
            if let Some((end, parsed)) = longest_parse(&chars, k) {
                let (start_b, end_b) = (byte_at(k), byte_at(end));
                match parsed.canonical() {
                    Some(canonical) => out.push(SegmentMention {
                        raw: text[start_b..end_b].to_string(),
                        canonical,
                        span: (start_b, end_b),
                    }),
                    None => log::info!(
                        "ignoring non-adjacent level range {:?}",
                        &text[start_b..end_b]
                    ),
                }
                k = end;
                continue;
            }
        }
        k += 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Cervical,
    Thoracic,
    Lumbar,
    Sacral,
}

#[derive(Clone, Copy, Debug)]
struct Parsed {
    upper_region: Region,
    upper: u32,
    lower_region: Region,
    lower: u32,
}

impl Parsed {
    fn canonical(&self) -> Option<MotionSegment> {
        use Region::*;
        match (self.upper_region, self.lower_region) {
            (Cervical, Cervical) if self.lower == self.upper + 1 => match self.upper {
                1 => Some(MotionSegment::OutOfScope),
                u => MotionSegment::from_upper_cervical(u),
            },
            (Cervical, Thoracic) if self.upper == 7 && self.lower == 1 => Some(MotionSegment::C7T1),
            (Cervical, _) => None,
            (Thoracic, Thoracic | Lumbar) | (Lumbar, Lumbar | Sacral) | (Sacral, Sacral) => {
                (self.upper <= 12 && self.lower <= 12).then_some(MotionSegment::OutOfScope)
            }
            _ => None,
        }
    }
}

/// A letter slot. `(` counts as an OCR'd `C`.
fn letter(c: char) -> Option<(Region, bool)> {
    match c {
        'C' | 'c' => Some((Region::Cervical, false)),
        '(' => Some((Region::Cervical, true)),
        'T' | 't' => Some((Region::Thoracic, false)),
        'L' | 'l' => Some((Region::Lumbar, false)),
        'S' | 's' => Some((Region::Sacral, false)),
        _ => None,
    }
}

/// A digit slot: `(value, is_real_digit)`.
fn digit(c: char) -> Option<(u32, bool)> {
    if let Some(d) = c.to_digit(10) {
        return Some((d, true));
    }
    let v = match c {
        'O' | 'o' => 0,
        'l' | 'I' | '|' => 1,
        'Z' | 'z' => 2,
        'A' => 4,
        'S' | 's' => 5,
        'b' | 'G' => 6,
        'B' => 8,
        'g' => 9,
        _ => return None,
    };
    Some((v, false))
}

fn separator(c: char) -> bool {
    matches!(c, '-' | '–' | '—' | '_' | '/' | '~' | '=' | '.')
}

fn digits(chars: &[(usize, char)], pos: usize, len: usize) -> Option<(u32, bool)> {
    let mut value = 0;
    let mut real = false;
    for i in 0..len {
        let (d, r) = digit(chars.get(pos + i)?.1)?;
        value = value * 10 + d;
        real |= r;
    }
    Some((value, real))
}

/// Index just past a separator (with optional spaces around it) and whether
/// it was tight (no spaces, not `.`), or `None` if there is no separator.
fn skip_separator(chars: &[(usize, char)], pos: usize) -> Option<(usize, bool)> {
    let mut p = pos;
    while chars.get(p).is_some_and(|c| c.1 == ' ') && p - pos < 1 {
        p += 1;
    }
    let sep = chars.get(p).filter(|c| separator(c.1))?.1;
    let spaced_before = p != pos;
    p += 1;
    let after = p;
    while chars.get(p).is_some_and(|c| c.1 == ' ') && p - pos < 3 {
        p += 1;
    }
    let spaced = spaced_before || p != after;
    // "1. C5" is an enumerator, not a level.
    if sep == '.' && spaced {
        return None;
    }
    Some((p, !spaced && sep != '.'))
}

fn longest_parse(chars: &[(usize, char)], k: usize) -> Option<(usize, Parsed)> {
    let at_boundary = |p: usize| chars.get(p).is_none_or(|c| !c.1.is_alphanumeric() && c.1 != '_');
    let mut best: Option<(usize, Parsed)> = None;
    let mut consider = |end: usize, parsed: Parsed| {
        if at_boundary(end) && best.is_none_or(|(e, _)| end > e) {
            best = Some((end, parsed));
        }
    };

    let first_letter = letter(chars[k].1);
    for l1 in [first_letter, None] {
        let after_l1 = if l1.is_some() { k + 1 } else { k };
        for d1_len in [2, 1] {
            let Some((upper, real1)) = digits(chars, after_l1, d1_len) else {
                continue;
            };
            let after_d1 = after_l1 + d1_len;
            let with_sep = skip_separator(chars, after_d1);
            for (after_sep, tight) in with_sep.into_iter().chain([(after_d1, false)]) {
                let has_sep = after_sep != after_d1;
                let second = chars.get(after_sep).and_then(|c| letter(c.1));
                for l2 in [second, None] {
                    let after_l2 = if l2.is_some() { after_sep + 1 } else { after_sep };
                    for d2_len in [2, 1] {
                        let Some((lower, real2)) = digits(chars, after_l2, d2_len) else {
                            continue;
                        };
                        if !(real1 || real2) {
                            continue;
                        }
                        match (l1, l2) {
                            (None, None) => continue,
                            // "3-C4": a dropped leading letter needs a tight
                            // separator and the second letter.
                            (None, Some(_)) if !tight => continue,
                            // "(" is only read as C when the second letter survives.
                            (Some((_, true)), None) => continue,
                            _ => {}
                        }
                        // Concatenated "C34" is two single digits.
                        if !has_sep && l2.is_none() && (d1_len != 1 || d2_len != 1) {
                            continue;
                        }
                        let upper_region = l1.or(l2).map(|l| l.0).unwrap_or(Region::Cervical);
                        let lower_region = l2.map(|l| l.0).unwrap_or(upper_region);
                        consider(
                            after_l2 + d2_len,
                            Parsed {
                                upper_region,
                                upper,
                                lower_region,
                                lower,
                            },
                        );
                    }
                }
            }
        }
    }
    best
}
