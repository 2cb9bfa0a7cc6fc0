//! Documents with standoff annotations: loading, span cleanup, sentence
//! splitting and span-aligned tokenization.

mod class;
mod offsets;
mod sentences;
mod tokenize;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

pub use class::EntityClass;
pub use offsets::{LineEndingStyle, LineLayout, OffsetPolicy};
pub use sentences::{split_sentences, SentenceBoundary};
pub use tokenize::{tokenize, Token, TokenizedDocument};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown entity class '{0}'")]
    UnknownClass(String),
    #[error("{file}:{line}: {message}")]
    MalformedAnnotation {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("mention {mention_id} in document {doc_id}: span {start}..{end} outside text of length {len}")]
    SpanOutOfRange {
        doc_id: String,
        mention_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("mention {mention_id} in document {doc_id}: span edge {offset} cannot be aligned to a token boundary")]
    Alignment {
        doc_id: String,
        mention_id: String,
        offset: usize,
    },
    #[error("duplicate document id '{0}'")]
    DuplicateDocument(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Half-open range of code-point positions in normalized document text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub class: EntityClass,
    /// Sorted, pairwise disjoint, non-empty.
    pub spans: Vec<Span>,
}

impl Mention {
    pub fn new(id: impl Into<String>, class: EntityClass, spans: Vec<Span>) -> Self {
        Mention {
            id: id.into(),
            class,
            spans,
        }
    }

    pub fn is_discontiguous(&self) -> bool {
        self.spans.len() > 1
    }

    pub fn total_len(&self) -> usize {
        self.spans.iter().map(Span::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    /// Text with line endings normalized to `\n`.
    pub text: String,
    pub mentions: Vec<Mention>,
    pub line_ending_style: LineEndingStyle,
    pub layout: LineLayout,
    pub offset_policy: OffsetPolicy,
}

impl Document {
    /// Builds a document from already-normalized text with `\n` line endings.
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>, mentions: Vec<Mention>) -> Self {
        let (text, layout) = LineLayout::normalize(&text.into());
        Document {
            doc_id: doc_id.into(),
            text,
            mentions,
            line_ending_style: layout.style(),
            layout,
            offset_policy: OffsetPolicy::Auto,
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }

    /// Text covered by `span`, by code-point positions.
    pub fn slice(&self, span: Span) -> String {
        self.text
            .chars()
            .skip(span.start)
            .take(span.len())
            .collect()
    }

    /// Checks the span invariants of every mention.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let len = self.char_len();
        for m in &self.mentions {
            for s in &m.spans {
                if s.is_empty() || s.end > len {
                    return Err(CorpusError::SpanOutOfRange {
                        doc_id: self.doc_id.clone(),
                        mention_id: m.id.clone(),
                        start: s.start,
                        end: s.end,
                        len,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// One entry of `manifest.json` in a corpus directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub text_file: PathBuf,
    pub ann_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_policy: Option<OffsetPolicy>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn read(path: &Path) -> Result<String, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a corpus directory.
///
/// With a `manifest.json` the listed documents are loaded (an entry's own
/// offset policy overrides `policy`); otherwise every `*.txt` file is paired
/// with the `*.ann` file of the same stem.
pub fn load_corpus(dir: &Path, policy: OffsetPolicy) -> Result<Corpus, CorpusError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let entries: Vec<ManifestEntry> = if manifest_path.exists() {
        let raw = read(&manifest_path)?;
        serde_json::from_str(&raw).map_err(|source| CorpusError::Manifest {
            path: manifest_path.clone(),
            source,
        })?
    } else {
        let listing = fs::read_dir(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut texts: Vec<PathBuf> = listing
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        texts.sort();
        texts
            .into_iter()
            .map(|p| {
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                ManifestEntry {
                    doc_id: stem.clone(),
                    text_file: PathBuf::from(format!("{stem}.txt")),
                    ann_file: PathBuf::from(format!("{stem}.ann")),
                    offset_policy: None,
                }
            })
            .collect()
    };

    let mut seen = HashSet::new();
    let mut documents = Vec::with_capacity(entries.len());
    for entry in entries {
        if !seen.insert(entry.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocument(entry.doc_id));
        }
        let raw_text = read(&dir.join(&entry.text_file))?;
        let ann_path = dir.join(&entry.ann_file);
        let raw_ann = read(&ann_path)?;
        let policy = entry.offset_policy.unwrap_or(policy);
        documents.push(parse_document(
            &entry.doc_id,
            &raw_text,
            &raw_ann,
            &ann_path,
            policy,
        )?);
    }
    Ok(Corpus { documents })
}

/// Parses one text and its annotation file contents.
pub fn parse_document(
    doc_id: &str,
    raw_text: &str,
    raw_ann: &str,
    ann_path: &Path,
    policy: OffsetPolicy,
) -> Result<Document, CorpusError> {
    let (text, layout) = LineLayout::normalize(raw_text);
    let len = text.chars().count();
    let ext_len = layout.external_len(len, policy);
    let mut doc = Document {
        doc_id: doc_id.to_string(),
        text,
        mentions: Vec::new(),
        line_ending_style: layout.style(),
        layout,
        offset_policy: policy,
    };

    for (lineno, line) in raw_ann.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| CorpusError::MalformedAnnotation {
            file: ann_path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(malformed(format!(
                "expected 3 or 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let class: EntityClass = fields[1]
            .parse()
            .map_err(|e: CorpusError| malformed(e.to_string()))?;
        let mut ext_spans = Vec::new();
        for part in fields[2].split(';') {
            let nums: Vec<&str> = part.split_whitespace().collect();
            let parsed: Option<(usize, usize)> = match nums.as_slice() {
                [s, e] => s.parse().ok().zip(e.parse().ok()),
                _ => None,
            };
            let (s, e) = parsed.ok_or_else(|| malformed(format!("bad span '{part}'")))?;
            if s >= e {
                return Err(malformed(format!("empty or reversed span '{part}'")));
            }
            ext_spans.push((s, e));
        }
        ext_spans.sort_unstable();
        if ext_spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(malformed("overlapping spans within one mention".into()));
        }
        let id = fields[0].to_string();
        if let Some(&(s, e)) = ext_spans.iter().find(|&&(_, e)| e > ext_len) {
            return Err(CorpusError::SpanOutOfRange {
                doc_id: doc_id.to_string(),
                mention_id: id,
                start: s,
                end: e,
                len: ext_len,
            });
        }
        let spans: Vec<Span> = ext_spans
            .iter()
            .map(|&(s, e)| {
                Span::new(
                    doc.layout.to_internal(s, policy),
                    doc.layout.to_internal(e, policy),
                )
            })
            .filter(|s| !s.is_empty())
            .collect();
        let mention = Mention::new(id, class, spans);
        if let Some(surface) = fields.get(3) {
            let found = mention
                .spans
                .iter()
                .map(|&s| doc.slice(s))
                .collect::<Vec<_>>()
                .join(" ");
            if found != *surface {
                log::warn!(
                    "{}:{}: surface '{}' does not match text '{}'",
                    ann_path.display(),
                    lineno + 1,
                    surface,
                    found
                );
            }
        }
        doc.mentions.push(mention);
    }
    doc.validate()?;
    Ok(doc)
}

/// Serializes mentions in the annotation-file format, using the document's
/// offset policy.
pub fn format_annotations(doc: &Document, mentions: &[Mention]) -> String {
    let mut out = String::new();
    for m in mentions {
        let spans: Vec<String> = m
            .spans
            .iter()
            .map(|s| {
                format!(
                    "{} {}",
                    doc.layout.to_external(s.start, doc.offset_policy),
                    doc.layout.to_external(s.end, doc.offset_policy)
                )
            })
            .collect();
        let surface: Vec<String> = m
            .spans
            .iter()
            .map(|&s| doc.slice(s).replace(['\t', '\n'], " "))
            .collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.id,
            m.class,
            spans.join(";"),
            surface.join(" ")
        ));
    }
    out
}

/// Writes a corpus directory (texts with original line endings, annotation
/// files and a manifest) that [`load_corpus`] reads back unchanged.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut manifest = Vec::new();
    for doc in &corpus.documents {
        let text_file = PathBuf::from(format!("{}.txt", doc.doc_id));
        let ann_file = PathBuf::from(format!("{}.ann", doc.doc_id));
        let tp = dir.join(&text_file);
        fs::write(&tp, doc.layout.denormalize(&doc.text)).map_err(io(&tp))?;
        let ap = dir.join(&ann_file);
        fs::write(&ap, format_annotations(doc, &doc.mentions)).map_err(io(&ap))?;
        manifest.push(ManifestEntry {
            doc_id: doc.doc_id.clone(),
            text_file,
            ann_file,
            offset_policy: Some(doc.offset_policy),
        });
    }
    let mp = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mp, json).map_err(io(&mp))
}

/// Whitespace or any Unicode punctuation (general category P*).
pub fn is_strippable(c: char) -> bool {
    c.is_whitespace() || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Shrinks every span so it neither starts nor ends on whitespace or
/// punctuation. Spans that become empty are dropped, and mentions left
/// without spans are dropped with a warning.
pub fn normalize_spans(doc: &Document) -> Document {
    let chars = doc.chars();
    let mut out = doc.clone();
    out.mentions = doc
        .mentions
        .iter()
        .filter_map(|m| {
            let spans: Vec<Span> = m
                .spans
                .iter()
                .filter_map(|s| {
                    let mut start = s.start;
                    let mut end = s.end.min(chars.len());
                    while start < end && is_strippable(chars[start]) {
                        start += 1;
                    }
                    while end > start && is_strippable(chars[end - 1]) {
                        end -= 1;
                    }
                    (start < end).then_some(Span::new(start, end))
                })
                .collect();
            if spans.is_empty() {
                log::warn!(
                    "document {}: mention {} ({}) dropped, nothing left after stripping",
                    doc.doc_id,
                    m.id,
                    m.class
                );
                None
            } else {
                Some(Mention::new(m.id.clone(), m.class, spans))
            }
        })
        .collect();
    out
}
