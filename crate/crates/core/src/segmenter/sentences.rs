use crate::model::{Report, Sentence};

const ABBREVIATIONS: &[&str] = &["dr", "vs", "approx", "e.g", "i.e", "fig"];

/// Splits a report into sentences.
///
/// Boundaries are newlines and runs of `.`, `!` or `?` followed by whitespace
/// or end of line. A period closing a leading list enumerator (`"3. "`) or a
/// known abbreviation does not end a sentence. Colons never split, so level
/// headers such as `"C3-C4:"` stay attached to their finding. Spans are byte
/// ranges with surrounding whitespace trimmed; everything outside the spans
/// is whitespace.
pub fn split_sentences(report: &Report) -> Vec<Sentence> {
    let text = report.text.as_str();
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        split_line(text, line_start, line_start + line.len(), &mut |start, end| {
            out.push(Sentence {
                report_id: report.report_id.clone(),
                index: out.len(),
                text: text[start..end].to_string(),
                span: (start, end),
            });
        });
        line_start += line.len();
    }
    out
}

fn split_line(text: &str, start: usize, end: usize, emit: &mut impl FnMut(usize, usize)) {
    let line = &text[start..end];
    let bytes = line.as_bytes();
    let mut piece_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b'.' | b'!' | b'?') {
                j += 1;
            }
            let at_break = j == bytes.len() || bytes[j].is_ascii_whitespace();
            if at_break && !protected_period(&line[piece_start..i], bytes[i]) {
                push_trimmed(start, line, piece_start, j, emit);
                piece_start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push_trimmed(start, line, piece_start, bytes.len(), emit);
}

/// `before` is the current piece up to (excluding) the punctuation mark.
fn protected_period(before: &str, mark: u8) -> bool {
    if mark != b'.' {
        return false;
    }
    let trimmed = before.trim_start();
    // List enumerator: the piece so far is just "12" or "a".
    if !trimmed.is_empty()
        && trimmed.len() <= 2
        && (trimmed.bytes().all(|b| b.is_ascii_digit())
            || (trimmed.len() == 1 && trimmed.as_bytes()[0].is_ascii_lowercase()))
    {
        return true;
    }
    let last_word = trimmed
        .rsplit(|c: char| c.is_whitespace() || c == '(')
        .next()
        .unwrap_or("");
    ABBREVIATIONS
        .iter()
        .any(|a| last_word.eq_ignore_ascii_case(a))
        && !trimmed.eq_ignore_ascii_case(last_word)
}

fn push_trimmed(base: usize, line: &str, from: usize, to: usize, emit: &mut impl FnMut(usize, usize)) {
    let piece = &line[from..to];
    let lead = piece.len() - piece.trim_start().len();
    let trail = piece.len() - piece.trim_end().len();
    if lead + trail < piece.len() {
        emit(base + from + lead, base + to - trail);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(text: &str) -> Report {
        Report {
            report_id: "r".into(),
            text: text.into(),
            ocr_flag: false,
        }
    }

    fn texts(text: &str) -> Vec<String> {
        split_sentences(&report(text)).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn two_level_findings() {
        let t = "C1-C2: No significant neuroforaminal or spinal canal narrowing. C2-C3: Mild disc bulge.";
        assert_eq!(
            texts(t),
            vec![
                "C1-C2: No significant neuroforaminal or spinal canal narrowing.",
                "C2-C3: Mild disc bulge."
            ]
        );
    }

    #[test]
    fn single_word() {
        assert_eq!(texts("Unremarkable."), vec!["Unremarkable."]);
    }

    #[test]
    fn no_punctuation_is_one_sentence() {
        assert_eq!(texts("mild degenerative change without stenosis"), vec!["mild degenerative change without stenosis"]);
    }

    #[test]
    fn segment_token_before_period_ends_sentence_but_colon_does_not() {
        assert_eq!(
            texts("Mild stenosis at C3-C4.\nC4-C5: Moderate disc bulge. No cord compression."),
            vec!["Mild stenosis at C3-C4.", "C4-C5: Moderate disc bulge.", "No cord compression."]
        );
    }

    #[test]
    fn decimals_enumerators_and_abbreviations() {
        assert_eq!(
            texts("1. Disc bulge measures 3.5 mm vs. 2 mm previously. 2. Stable."),
            vec!["1. Disc bulge measures 3.5 mm vs. 2 mm previously.", "2. Stable."]
        );
    }

    #[test]
    fn numbered_findings_fixture() {
        let text = include_str!("../../tests/fixtures/numbered_report.txt");
        let sentences = split_sentences(&report(text));
        let expected: Vec<&str> = include_str!("../../tests/fixtures/numbered_report.sentences")
            .lines()
            .collect();
        assert_eq!(sentences.len(), 10);
        assert_eq!(sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(), expected);
        assert_reconstructs(text, &sentences);
    }

    pub(crate) fn assert_reconstructs(text: &str, sentences: &[Sentence]) {
        let mut cursor = 0;
        for (i, s) in sentences.iter().enumerate() {
            assert_eq!(s.index, i);
            assert!(s.span.0 >= cursor, "overlap at {i}");
            assert!(text[cursor..s.span.0].chars().all(char::is_whitespace));
            assert_eq!(&text[s.span.0..s.span.1], s.text);
            cursor = s.span.1;
        }
        assert!(text[cursor..].chars().all(char::is_whitespace));
    }

    proptest::proptest! {
        #[test]
        fn spans_reconstruct_any_text(t in "[a-zA-Z0-9 .:!?\n-]{0,200}") {
            let sentences = split_sentences(&report(&t));
            assert_reconstructs(&t, &sentences);
        }
    }
}
