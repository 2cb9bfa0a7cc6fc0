//! Standoff mentions to per-token IOB2 tag sequences and back, including
//! discontiguous-span joining and one sentence copy per overlap level.

mod iob2;
mod levels;
mod tagset;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityClass, Token, TokenizedDocument};

pub use iob2::{decode_iob2, encode_iob2, is_valid_iob2, repair_iob2};
pub use levels::{
    assign_levels, join_discontiguous, level_views, selection_order, split_at_sentences,
    LinearMention,
};
pub use tagset::{build_transition_constraints, Tag, TagId, TagSet, TransitionMask};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("unknown tag '{0}'")]
    UnknownTag(String),
    #[error("tag vocabulary is not in canonical order")]
    NonCanonicalVocabulary,
    #[error("class {0} is not part of the tag set")]
    ClassNotInTagSet(EntityClass),
    #[error("mention {mention_id} ({start}..{end}) is not aligned to token boundaries")]
    Misaligned {
        mention_id: String,
        start: usize,
        end: usize,
    },
    #[error("mention {0} overlaps another mention on the same level")]
    Overlap(String),
    #[error("tag sequence is not valid IOB2")]
    InvalidIob2,
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Original,
    OverlapLevel,
    Translation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenFeatures {
    pub relative_position: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_title: Option<bool>,
}

/// One sentence copy with its tags: the unit of model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub doc_id: String,
    pub sentence_index: usize,
    pub level: usize,
    pub tokens: Vec<Token>,
    pub tags: Vec<TagId>,
    pub features: Vec<TokenFeatures>,
    pub origin: Origin,
}

impl TaggedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Largest gap, in characters, across which discontiguous spans are joined.
    pub max_gap: usize,
    /// Emit one extra sentence copy per additional overlap level.
    pub overlap_levels: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            max_gap: 5,
            overlap_levels: true,
        }
    }
}

/// Single-span, sentence-scoped mentions of a tokenized document.
pub fn linear_mentions(doc: &TokenizedDocument, max_gap: usize) -> Vec<LinearMention> {
    let joined = join_discontiguous(&doc.document.mentions, max_gap);
    split_at_sentences(joined, &doc.sentences, &doc.document.chars())
}

/// Encodes every sentence of `doc`. `features` holds one row per document
/// token. Sentences of translated documents carry [`Origin::Translation`].
pub fn encode_document(
    doc: &TokenizedDocument,
    tag_set: &TagSet,
    options: &EncodeOptions,
    features: &[TokenFeatures],
    translated: bool,
) -> Result<Vec<TaggedSentence>, EncodingError> {
    let mentions = linear_mentions(doc, options.max_gap);
    let mut out = Vec::new();
    for (si, bound) in doc.sentences.iter().enumerate() {
        let range = doc.sentence_tokens[si].clone();
        if range.is_empty() {
            continue;
        }
        let tokens = &doc.tokens[range.clone()];
        let local: Vec<LinearMention> = mentions
            .iter()
            .filter(|m| m.span.start >= bound.start && m.span.end <= bound.end)
            .cloned()
            .collect();
        let levels = assign_levels(&local);
        let mut views = level_views(&local, &levels);
        if views.is_empty() {
            views.push(Vec::new());
        }
        if !options.overlap_levels {
            views.truncate(1);
        }
        for (k, view) in views.iter().enumerate() {
            let chosen: Vec<&LinearMention> = view.iter().map(|&i| &local[i]).collect();
            let tags = encode_iob2(tokens, &chosen, tag_set)?;
            let origin = if translated {
                Origin::Translation
            } else if k == 0 {
                Origin::Original
            } else {
                Origin::OverlapLevel
            };
            out.push(TaggedSentence {
                doc_id: doc.document.doc_id.clone(),
                sentence_index: si,
                level: k + 1,
                tokens: tokens.to_vec(),
                tags,
                features: features[range.clone()].to_vec(),
                origin,
            });
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<(), EncodingError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|source| EncodingError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>, EncodingError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| EncodingError::Json { line: i + 1, source })?,
        );
    }
    Ok(out)
}
