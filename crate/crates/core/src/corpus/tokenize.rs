use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Document, Mention, SentenceBoundary, Span};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub sentence_index: usize,
}

/// A document with mentions aligned to the tokens it was split into.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedDocument {
    pub document: Document,
    pub sentences: Vec<SentenceBoundary>,
    pub tokens: Vec<Token>,
    /// Token index range of each sentence.
    pub sentence_tokens: Vec<Range<usize>>,
}

impl TokenizedDocument {
    pub fn tokens_of(&self, sentence: usize) -> &[Token] {
        &self.tokens[self.sentence_tokens[sentence].clone()]
    }

    /// Set of positions at which some token starts or ends.
    pub fn boundaries(&self) -> BTreeSet<usize> {
        self.tokens.iter().flat_map(|t| [t.start, t.end]).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharKind {
    Digit,
    Lower,
    Upper,
    OtherLetter,
    NumberPunct,
}

fn kind(c: char) -> CharKind {
    if c.is_numeric() {
        CharKind::Digit
    } else if c.is_lowercase() {
        CharKind::Lower
    } else if c.is_uppercase() {
        CharKind::Upper
    } else if c.is_alphanumeric() {
        CharKind::OtherLetter
    } else {
        CharKind::NumberPunct
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Whether splitting between `a` and `b` separates two naturally distinct
/// pieces of a word: digit/letter junctions, case changes to uppercase, and
/// the separators inside numbers.
fn natural_junction(a: char, b: char) -> bool {
    let (ka, kb) = (kind(a), kind(b));
    match (ka, kb) {
        (CharKind::Digit, CharKind::Digit) => false,
        (CharKind::Digit, _) | (_, CharKind::Digit) => true,
        (CharKind::NumberPunct, _) | (_, CharKind::NumberPunct) => true,
        (CharKind::Lower, CharKind::Upper) => true,
        _ => false,
    }
}

/// Base segmentation of `chars[range]`: whitespace separates tokens, runs of
/// letters and digits form one token (with `.`/`,` between digits kept inside
/// numbers), and every other character is a token of its own.
fn base_tokens(chars: &[char], range: Range<usize>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = range.start;
    while i < range.end {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            i += 1;
            while i < range.end {
                let d = chars[i];
                if is_word_char(d) {
                    i += 1;
                } else if matches!(d, '.' | ',')
                    && i + 1 < range.end
                    && chars[i - 1].is_ascii_digit()
                    && chars[i + 1].is_ascii_digit()
                {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((start, i));
        } else {
            out.push((i, i + 1));
            i += 1;
        }
    }
    out
}

enum Edge {
    Start,
    End,
}

/// Splits the document into tokens whose boundaries line up with every
/// mention span.
///
/// A span edge that falls inside a base token splits that token when the
/// edge sits on a natural junction (for example the digit/letter junction of
/// "15GD"). An edge inside an unbroken run of letters or digits is snapped to
/// a token boundary at most one character away; otherwise alignment fails.
pub fn tokenize(
    doc: &Document,
    boundaries: &[SentenceBoundary],
) -> Result<TokenizedDocument, CorpusError> {
    let chars = doc.chars();
    let mut base: Vec<(usize, usize, usize)> = Vec::new();
    for (si, b) in boundaries.iter().enumerate() {
        base.extend(
            base_tokens(&chars, b.start..b.end)
                .into_iter()
                .map(|(s, e)| (s, e, si)),
        );
    }

    let containing = |p: usize| base.iter().position(|&(s, e, _)| s < p && p < e);
    let mut splits: BTreeSet<usize> = BTreeSet::new();
    let mut mentions: Vec<Mention> = Vec::with_capacity(doc.mentions.len());

    for m in &doc.mentions {
        let mut spans = Vec::with_capacity(m.spans.len());
        for span in &m.spans {
            let mut edges = [span.start, span.end];
            for (slot, edge) in [Edge::Start, Edge::End].into_iter().enumerate() {
                let p = edges[slot];
                let Some(ti) = containing(p) else {
                    // edges on a boundary stay; edges in whitespace move onto the adjacent token
                    let ws = |r: Range<usize>| chars[r].iter().all(|c| c.is_whitespace());
                    match edge {
                        Edge::Start => {
                            if let Some(t) = base.iter().find(|t| t.0 >= p) {
                                if ws(p..t.0) {
                                    edges[slot] = t.0;
                                }
                            }
                        }
                        Edge::End => {
                            if let Some(t) = base.iter().rev().find(|t| t.1 <= p) {
                                if ws(t.1..p) {
                                    edges[slot] = t.1;
                                }
                            }
                        }
                    }
                    continue;
                };
                let (ts, te, _) = base[ti];
                if natural_junction(chars[p - 1], chars[p]) {
                    splits.insert(p);
                    continue;
                }
                let (near, far) = match edge {
                    Edge::Start => (ts, te),
                    Edge::End => (te, ts),
                };
                edges[slot] = if p.abs_diff(near) <= 1 {
                    near
                } else if p.abs_diff(far) <= 1 {
                    far
                } else {
                    return Err(CorpusError::Alignment {
                        doc_id: doc.doc_id.clone(),
                        mention_id: m.id.clone(),
                        offset: p,
                    });
                };
                log::warn!(
                    "document {}: mention {} edge {} snapped to {}",
                    doc.doc_id,
                    m.id,
                    p,
                    edges[slot]
                );
            }
            if edges[0] < edges[1] {
                spans.push(Span::new(edges[0], edges[1]));
            }
        }
        spans.sort_unstable();
        spans.dedup();
        if spans.is_empty() {
            log::warn!("document {}: mention {} dropped during alignment", doc.doc_id, m.id);
        } else {
            mentions.push(Mention::new(m.id.clone(), m.class, spans));
        }
    }

    let mut tokens = Vec::with_capacity(base.len() + splits.len());
    for &(s, e, si) in &base {
        let mut cut = s;
        for &p in splits.range(s + 1..e) {
            tokens.push((cut, p, si));
            cut = p;
        }
        tokens.push((cut, e, si));
    }
    let tokens: Vec<Token> = tokens
        .into_iter()
        .map(|(start, end, sentence_index)| Token {
            text: chars[start..end].iter().collect(),
            start,
            end,
            sentence_index,
        })
        .collect();

    let mut sentence_tokens = vec![0..0; boundaries.len()];
    let mut i = 0;
    for (si, range) in sentence_tokens.iter_mut().enumerate() {
        let start = i;
        while i < tokens.len() && tokens[i].sentence_index == si {
            i += 1;
        }
        *range = start..i;
    }

    let mut document = doc.clone();
    document.mentions = mentions;
    Ok(TokenizedDocument {
        document,
        sentences: boundaries.to_vec(),
        tokens,
        sentence_tokens,
    })
}
