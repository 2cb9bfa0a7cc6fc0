//! Round-trip translation augmentation with mention protection, and the
//! auxiliary token features (relative position, title occurrence).

mod abbrev;
mod title;
mod translate;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, LineLayout, Mention, Span};

pub use abbrev::{detect_abbreviations, Abbreviation};
pub use title::{in_title_flags, is_stopword, TitleFetcher, TitleRecord, STOPWORDS};
pub use translate::{FixtureEntry, FixtureTranslator, HttpTranslator, IdentityTranslator, Translator};

/// Separates a document id from the pivot language of its translated copy.
pub const PIVOT_SEPARATOR: char = '@';

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("translation request failed: {message}")]
    Transport { message: String, retriable: bool },
    #[error("no recorded translation for '{snippet}' ({source_lang} -> {target_lang})")]
    NoFixture {
        snippet: String,
        source_lang: String,
        target_lang: String,
    },
    #[error("placeholders lost in translation: {missing:?}")]
    RecoveryFailure { missing: Vec<String> },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

/// One protected region: the characters of one or more overlapping mention
/// spans, replaced by `placeholder` during translation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderEntry {
    pub placeholder: String,
    pub mention_ids: Vec<String>,
    pub original_surface: String,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderMap {
    pub entries: Vec<PlaceholderEntry>,
}

impl PlaceholderMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn placeholder(index: usize) -> String {
    format!("XQZ{:04}XQZ", index + 1)
}

/// Replaces every maximal group of overlapping mention spans with a
/// placeholder. Nested mentions travel inside their outermost surface.
pub fn protect_mentions(doc: &Document) -> (String, PlaceholderMap) {
    let mut spans: Vec<(Span, &str)> = doc
        .mentions
        .iter()
        .flat_map(|m| m.spans.iter().map(move |s| (*s, m.id.as_str())))
        .collect();
    spans.sort_by_key(|(s, _)| (s.start, s.end));
    let mut regions: Vec<(Span, Vec<String>)> = Vec::new();
    for (s, id) in spans {
        match regions.last_mut() {
            Some((r, ids)) if s.start < r.end => {
                r.end = r.end.max(s.end);
                if !ids.iter().any(|x| x == id) {
                    ids.push(id.to_string());
                }
            }
            _ => regions.push((s, vec![id.to_string()])),
        }
    }
    let chars = doc.chars();
    let mut text = String::new();
    let mut pos = 0;
    let mut map = PlaceholderMap::default();
    for (k, (span, ids)) in regions.into_iter().enumerate() {
        text.extend(&chars[pos..span.start]);
        let ph = placeholder(k);
        text.push_str(&ph);
        map.entries.push(PlaceholderEntry {
            placeholder: ph,
            mention_ids: ids,
            original_surface: chars[span.start..span.end].iter().collect(),
            span,
        });
        pos = span.end;
    }
    text.extend(&chars[pos..]);
    (text, map)
}

/// Case-insensitive pattern for a placeholder that tolerates whitespace
/// inserted between its characters.
fn fuzzy_pattern(ph: &str) -> Regex {
    let body: Vec<String> = ph.chars().map(|c| regex::escape(&c.to_string())).collect();
    Regex::new(&format!("(?i){}", body.join(r"\s*"))).expect("valid placeholder pattern")
}

/// Placeholders of `map` that do not occur exactly once in `text`.
pub fn missing_placeholders(text: &str, map: &PlaceholderMap) -> Vec<String> {
    map.entries
        .iter()
        .filter(|e| fuzzy_pattern(&e.placeholder).find_iter(text).count() != 1)
        .map(|e| e.placeholder.clone())
        .collect()
}

/// Translates to `pivot` and back to English, checking that every
/// placeholder survives.
pub fn round_trip(
    text: &str,
    map: &PlaceholderMap,
    translator: &dyn Translator,
    pivot: &str,
) -> Result<String, AugmentError> {
    let there = translator.translate(text, "en", pivot)?;
    let back = translator.translate(&there, pivot, "en")?;
    let missing = missing_placeholders(&back, map);
    if missing.is_empty() {
        Ok(back)
    } else {
        Err(AugmentError::RecoveryFailure { missing })
    }
}

/// Substitutes the original surfaces back and recomputes mention offsets;
/// `None` if some placeholder cannot be located exactly once.
pub fn try_restore(translated: &str, map: &PlaceholderMap, original: &Document, doc_id: &str) -> Option<Document> {
    let (text, _) = LineLayout::normalize(translated);
    let mut sites: Vec<(usize, usize, &PlaceholderEntry)> = Vec::new();
    for e in &map.entries {
        let re = fuzzy_pattern(&e.placeholder);
        let mut found = re.find_iter(&text);
        let m = found.next()?;
        if found.next().is_some() {
            return None;
        }
        sites.push((m.start(), m.end(), e));
    }
    sites.sort_by_key(|s| s.0);
    if sites.windows(2).any(|w| w[1].0 < w[0].1) {
        return None;
    }

    let mut out = String::new();
    let mut out_chars = 0;
    let mut byte_pos = 0;
    // (original region span, new start)
    let mut moved: Vec<(Span, usize)> = Vec::new();
    for (start, end, e) in sites {
        let between = &text[byte_pos..start];
        out.push_str(between);
        out_chars += between.chars().count();
        moved.push((e.span, out_chars));
        out.push_str(&e.original_surface);
        out_chars += e.original_surface.chars().count();
        byte_pos = end;
    }
    out.push_str(&text[byte_pos..]);

    let relocate = |s: &Span| -> Option<Span> {
        let (region, new_start) = moved.iter().find(|(r, _)| r.start <= s.start && s.end <= r.end)?;
        let start = new_start + (s.start - region.start);
        Some(Span::new(start, start + s.len()))
    };
    let mentions = original
        .mentions
        .iter()
        .map(|m| {
            let spans = m.spans.iter().map(relocate).collect::<Option<Vec<Span>>>()?;
            Some(Mention::new(m.id.clone(), m.class, spans))
        })
        .collect::<Option<Vec<Mention>>>()?;
    let mut doc = Document::new(doc_id, out, mentions);
    doc.offset_policy = original.offset_policy;
    doc.validate().ok()?;
    Some(doc)
}

/// Like [`try_restore`], but falls back to the original text and mentions
/// (under the new id) when a placeholder cannot be recovered.
pub fn restore_mentions(translated: &str, map: &PlaceholderMap, original: &Document, doc_id: &str) -> Document {
    try_restore(translated, map, original, doc_id).unwrap_or_else(|| {
        log::warn!("{doc_id}: placeholders not recoverable, keeping the original text");
        renamed(original, doc_id)
    })
}

fn renamed(doc: &Document, doc_id: &str) -> Document {
    let mut d = doc.clone();
    d.doc_id = doc_id.to_string();
    d
}

pub fn translated_id(doc_id: &str, pivot: &str) -> String {
    format!("{doc_id}{PIVOT_SEPARATOR}{pivot}")
}

/// The document a translated copy was made from.
pub fn source_doc_id(doc_id: &str) -> &str {
    doc_id.rsplit_once(PIVOT_SEPARATOR).map_or(doc_id, |(src, _)| src)
}

/// Outcome of augmenting one document through one pivot.
#[derive(Clone, Debug)]
pub struct Augmented {
    pub document: Document,
    pub fell_back: bool,
}

/// Round-trips one document through `pivot`. Any failure (transport,
/// lost placeholder) yields the original text under the translated id.
pub fn augment_document(doc: &Document, translator: &dyn Translator, pivot: &str) -> Augmented {
    let id = translated_id(&doc.doc_id, pivot);
    let (text, map) = protect_mentions(doc);
    let restored = match round_trip(&text, &map, translator, pivot) {
        Ok(back) => try_restore(&back, &map, doc, &id),
        Err(e) => {
            log::warn!("{}: {pivot} round trip failed: {e}", doc.doc_id);
            None
        }
    };
    match restored {
        Some(document) => Augmented {
            document,
            fell_back: false,
        },
        None => {
            log::warn!("{}: using the original text for pivot {pivot}", doc.doc_id);
            Augmented {
                document: renamed(doc, &id),
                fell_back: true,
            }
        }
    }
}

/// The originals followed by one translated copy per document and pivot.
pub fn augment_corpus(docs: &[Document], translator: &dyn Translator, pivots: &[String]) -> (Vec<Document>, usize) {
    let mut out = docs.to_vec();
    let mut fallbacks = 0;
    for pivot in pivots {
        for doc in docs {
            let a = augment_document(doc, translator, pivot);
            fallbacks += usize::from(a.fell_back);
            out.push(a.document);
        }
    }
    (out, fallbacks)
}

/// Token `i` of `n` gets `i/(n−1)` rounded to two decimals; a single token
/// gets 0.
pub fn relative_positions(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| (100.0 * i as f64 / (n - 1) as f64).round() / 100.0)
        .collect()
}
