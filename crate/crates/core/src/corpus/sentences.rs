use serde::{Deserialize, Serialize};

use super::Document;

/// Half-open character range of one sentence. Consecutive boundaries tile
/// the whole text; trailing whitespace belongs to the preceding sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceBoundary {
    pub start: usize,
    pub end: usize,
}

/// Tokens ending in a period that never close a sentence. Compared
/// case-insensitively against the whitespace-delimited word.
const ABBREVIATIONS: &[&str] = &[
    "s.d.", "s.e.", "s.e.m.", "e.g.", "i.e.", "al.", "et al.", "fig.", "figs.", "ref.", "refs.",
    "vs.", "approx.", "ca.", "cf.", "no.", "nos.", "dr.", "mr.", "mrs.", "ms.", "prof.", "inc.",
    "ltd.", "co.", "corp.", "st.", "sp.", "spp.", "var.", "vol.", "eq.", "min.", "max.", "hr.",
    "hrs.", "wk.", "wks.", "mo.", "yr.", "yrs.", "conc.", "temp.", "resp.", "u.s.", "i.v.",
    "i.p.", "s.c.", "p.o.", "b.w.", "e.g.,", "i.e.,",
];

fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    let trimmed = lower.trim_start_matches(['(', '[', '"', '\'']);
    if ABBREVIATIONS.contains(&trimmed) {
        return true;
    }
    // Single initials such as "J." or dotted acronyms such as "S.D." / "U.K."
    let letters: Vec<&str> = trimmed.split('.').filter(|s| !s.is_empty()).collect();
    !letters.is_empty()
        && trimmed.ends_with('.')
        && letters.iter().all(|s| s.chars().count() == 1 && s.chars().all(char::is_alphabetic))
}

/// Splits a document into sentences with a rule-based splitter.
///
/// A sentence ends after `.`, `!` or `?` (plus any closing brackets or
/// quotes) when followed by whitespace and then an uppercase letter, digit or
/// opening bracket, unless the word is a known abbreviation. Blank lines
/// always end a sentence. Boundaries that would fall inside a mention span
/// are removed.
pub fn split_sentences(doc: &Document) -> Vec<SentenceBoundary> {
    let chars = doc.chars();
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }
    let mut starts = vec![0usize];
    let mut i = 0;
    while i < n {
        let c = chars[i];
        let terminal = matches!(c, '.' | '!' | '?');
        let blank_line = c == '\n' && {
            let mut j = i + 1;
            while j < n && chars[j] != '\n' && chars[j].is_whitespace() {
                j += 1;
            }
            j < n && chars[j] == '\n'
        };
        if terminal || blank_line {
            let mut j = i + 1;
            if terminal {
                while j < n && matches!(chars[j], ')' | ']' | '"' | '\'' | '\u{201d}') {
                    j += 1;
                }
            }
            let ws_start = j;
            while j < n && chars[j].is_whitespace() {
                j += 1;
            }
            let mut split = j < n && (blank_line || j > ws_start);
            if split && terminal && !blank_line {
                let next = chars[j];
                let paragraph = chars[ws_start..j].iter().filter(|&&c| c == '\n').count() >= 2;
                split = paragraph
                    || next.is_uppercase()
                    || next.is_ascii_digit()
                    || matches!(next, '(' | '[' | '"' | '\u{201c}');
                if split && c == '.' && !paragraph {
                    let mut w = i;
                    while w > 0 && !chars[w - 1].is_whitespace() {
                        w -= 1;
                    }
                    let word: String = chars[w..=i].iter().collect();
                    let mut prev_word = String::new();
                    if w > 0 {
                        let mut pw = w - 1;
                        while pw > 0 && chars[pw].is_whitespace() {
                            pw -= 1;
                        }
                        let mut ps = pw;
                        while ps > 0 && !chars[ps - 1].is_whitespace() {
                            ps -= 1;
                        }
                        prev_word = chars[ps..=pw].iter().collect();
                    }
                    let two = format!("{} {}", prev_word, word);
                    if is_abbreviation(&word) || is_abbreviation(&two) {
                        split = false;
                    }
                }
            }
            if split {
                starts.push(j);
                i = j;
                continue;
            }
        }
        i += 1;
    }

    // never split inside a mention span
    starts.retain(|&b| {
        b == 0
            || !doc
                .mentions
                .iter()
                .flat_map(|m| &m.spans)
                .any(|s| s.start < b && b < s.end)
    });
    starts.dedup();

    let mut bounds: Vec<SentenceBoundary> = starts
        .windows(2)
        .map(|w| SentenceBoundary {
            start: w[0],
            end: w[1],
        })
        .collect();
    bounds.push(SentenceBoundary {
        start: *starts.last().unwrap(),
        end: n,
    });
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityClass, Mention, Span};

    fn count(text: &str) -> usize {
        split_sentences(&Document::new("d", text, vec![])).len()
    }

    #[test]
    fn period_space_rule() {
        let doc = Document::new("d", "A was 5. B was 6.", vec![]);
        let b = split_sentences(&doc);
        assert_eq!(b.len(), 2);
        assert_eq!(doc.slice(Span::new(b[0].start, b[0].end)), "A was 5. ");
        assert_eq!(b[1].end, 17);
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(count("weight was 49 ± 13.4 (mean ± S.D.) nm"), 1);
        assert_eq!(count("Values are mean ± S.D. Groups were compared."), 1);
        assert_eq!(count("As shown by Smith et al. The effect was large."), 1);
        assert_eq!(count("Some agents, e.g. Apigenin, were used."), 1);
    }

    #[test]
    fn no_terminal_punctuation() {
        assert_eq!(count("rats were dosed daily"), 1);
        assert_eq!(count(""), 0);
    }

    #[test]
    fn lowercase_continuation_and_decimals() {
        assert_eq!(count("It was 0.78 mg. then more"), 1);
        assert_eq!(count("Dose was 3.86 µm. Length was 49 nm."), 2);
    }

    #[test]
    fn blank_line_splits() {
        assert_eq!(count("Materials and methods\n\nRats were used"), 2);
    }

    #[test]
    fn never_inside_mention() {
        let text = "Dosed at 5 mg. Kg was noted.";
        let doc = Document::new(
            "d",
            text,
            vec![Mention::new("T1", EntityClass::DoseUnits, vec![Span::new(11, 17)])],
        );
        assert_eq!(split_sentences(&doc).len(), 1);
        assert_eq!(count(text), 2);
    }

    #[test]
    fn boundaries_tile_text() {
        let doc = Document::new("d", "One. Two! Three? Four", vec![]);
        let b = split_sentences(&doc);
        assert_eq!(b.len(), 4);
        assert_eq!(b[0].start, 0);
        assert!(b.windows(2).all(|w| w[0].end == w[1].start));
        assert_eq!(b.last().unwrap().end, doc.char_len());
    }
}
