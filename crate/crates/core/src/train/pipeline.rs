use super::{ensemble_predict, sentence_mentions, TrainError};
use crate::augment::{detect_abbreviations, in_title_flags, relative_positions, PIVOT_SEPARATOR, TitleRecord};
use crate::corpus::{normalize_spans, split_sentences, tokenize, Document, Mention, TokenizedDocument};
use crate::encoding::{encode_document, EncodeOptions, Origin, TagSet, TaggedSentence, TokenFeatures};
use crate::eval::MentionsByDoc;
use crate::layers::{Embeddings, Model};

/// Whether the title-occurrence feature is computed, and from which title.
#[derive(Clone, Copy, Debug)]
pub enum TitleFeature<'a> {
    Off,
    On(Option<&'a TitleRecord>),
}

/// A document after span cleanup, tokenization and encoding.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub tokenized: TokenizedDocument,
    pub sentences: Vec<TaggedSentence>,
}

/// Span cleanup, sentence splitting, tokenization, token features and
/// multi-level IOB2 encoding. Ids containing the pivot separator mark
/// translated copies.
pub fn prepare_document(
    doc: &Document,
    tag_set: &TagSet,
    options: &EncodeOptions,
    title: TitleFeature<'_>,
) -> Result<Prepared, TrainError> {
    let doc = normalize_spans(doc);
    let bounds = split_sentences(&doc);
    let tokenized = tokenize(&doc, &bounds)?;
    let positions = relative_positions(tokenized.tokens.len());
    let in_title: Option<Vec<bool>> = match title {
        TitleFeature::Off => None,
        TitleFeature::On(record) => {
            if record.is_none() {
                log::warn!("{}: no title, in_title is false throughout", doc.doc_id);
            }
            let mut abbrevs = detect_abbreviations(&doc.text);
            if let Some(text) = record.and_then(|r| r.abstract_text.as_deref()) {
                abbrevs.extend(detect_abbreviations(text));
            }
            Some(in_title_flags(&tokenized.tokens, record, &abbrevs))
        }
    };
    let features: Vec<TokenFeatures> = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| TokenFeatures {
            relative_position: p,
            in_title: in_title.as_ref().map(|f| f[i]),
        })
        .collect();
    let translated = doc.doc_id.contains(PIVOT_SEPARATOR);
    let sentences = encode_document(&tokenized, tag_set, options, &features, translated)?;
    Ok(Prepared { tokenized, sentences })
}

/// [`prepare_document`] over a corpus, looking titles up by document id.
pub fn prepare_documents<'a>(
    docs: &[Document],
    tag_set: &TagSet,
    options: &EncodeOptions,
    titles: Option<&dyn Fn(&str) -> Option<&'a TitleRecord>>,
) -> Result<Vec<Prepared>, TrainError> {
    docs.iter()
        .map(|d| {
            let title = match titles {
                None => TitleFeature::Off,
                Some(f) => TitleFeature::On(f(crate::augment::source_doc_id(&d.doc_id))),
            };
            prepare_document(d, tag_set, options, title)
        })
        .collect()
}

/// Reference mentions after cleanup and alignment, keyed by document.
pub fn gold_mentions(prepared: &[Prepared]) -> MentionsByDoc {
    prepared
        .iter()
        .filter(|p| !p.tokenized.document.doc_id.contains(PIVOT_SEPARATOR))
        .map(|p| (p.tokenized.document.doc_id.clone(), p.tokenized.document.mentions.clone()))
        .collect()
}

/// Predicted mentions for one document, voting when several models are
/// given. Mention ids are `T1`, `T2`, … in text order.
pub fn predict_document(models: &[Model], prepared: &Prepared, embeddings: &Embeddings) -> Result<Vec<Mention>, TrainError> {
    let first = models.first().ok_or(TrainError::NoModels)?;
    let mut out = Vec::new();
    for s in prepared.sentences.iter().filter(|s| s.origin == Origin::Original && s.level == 1) {
        let tags = ensemble_predict(models, s, embeddings)?;
        out.extend(sentence_mentions(s, &tags, &first.tag_set)?);
    }
    for (i, m) in out.iter_mut().enumerate() {
        m.id = format!("T{}", i + 1);
    }
    Ok(out)
}
