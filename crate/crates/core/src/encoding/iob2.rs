use super::{EncodingError, LinearMention, Tag, TagId, TagSet};
use crate::corpus::{Mention, Span, Token};

/// Tags `tokens` with the given non-overlapping mentions: `B-X` on the first
/// token of each mention, `I-X` on the rest, `O` elsewhere.
pub fn encode_iob2(
    tokens: &[Token],
    mentions: &[&LinearMention],
    tag_set: &TagSet,
) -> Result<Vec<TagId>, EncodingError> {
    let mut tags = vec![tag_set.outside(); tokens.len()];
    for m in mentions {
        let misaligned = || EncodingError::Misaligned {
            mention_id: m.id.clone(),
            start: m.span.start,
            end: m.span.end,
        };
        let first = tokens
            .iter()
            .position(|t| t.start == m.span.start)
            .ok_or_else(misaligned)?;
        let last = tokens
            .iter()
            .position(|t| t.end == m.span.end)
            .ok_or_else(misaligned)?;
        if last < first {
            return Err(misaligned());
        }
        let b = tag_set
            .id(Tag::Begin(m.class))
            .ok_or(EncodingError::ClassNotInTagSet(m.class))?;
        let i = tag_set.id(Tag::Inside(m.class)).expect("B and I share a class");
        for (k, slot) in tags[first..=last].iter_mut().enumerate() {
            if *slot != tag_set.outside() {
                return Err(EncodingError::Overlap(m.id.clone()));
            }
            *slot = if k == 0 { b } else { i };
        }
    }
    Ok(tags)
}

pub fn is_valid_iob2(tags: &[TagId], tag_set: &TagSet) -> bool {
    let mut prev: Option<Tag> = None;
    for &id in tags {
        if id >= tag_set.len() {
            return false;
        }
        let tag = tag_set.tag(id);
        if let Tag::Inside(c) = tag {
            if !matches!(prev, Some(Tag::Begin(p) | Tag::Inside(p)) if p == c) {
                return false;
            }
        }
        prev = Some(tag);
    }
    true
}

/// Converts maximal `B-X (I-X)*` runs into single-span mentions.
pub fn decode_iob2(
    tokens: &[Token],
    tags: &[TagId],
    tag_set: &TagSet,
) -> Result<Vec<Mention>, EncodingError> {
    if tokens.len() != tags.len() {
        return Err(EncodingError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    if !is_valid_iob2(tags, tag_set) {
        return Err(EncodingError::InvalidIob2);
    }
    let mut out: Vec<Mention> = Vec::new();
    for (tok, &id) in tokens.iter().zip(tags) {
        match tag_set.tag(id) {
            Tag::Outside => {}
            Tag::Begin(c) => out.push(Mention::new(
                format!("P{}", out.len() + 1),
                c,
                vec![Span::new(tok.start, tok.end)],
            )),
            Tag::Inside(_) => {
                let last = out.last_mut().expect("valid IOB2 has an open mention");
                last.spans[0].end = tok.end;
            }
        }
    }
    Ok(out)
}

/// Rewrites every orphan `I-X` (not preceded by `B-X` or `I-X`) to `B-X`.
pub fn repair_iob2(tags: &[TagId], tag_set: &TagSet) -> Vec<TagId> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<Tag> = None;
    for &id in tags {
        let mut tag = tag_set.tag(id);
        if let Tag::Inside(c) = tag {
            if !matches!(prev, Some(Tag::Begin(p) | Tag::Inside(p)) if p == c) {
                tag = Tag::Begin(c);
            }
        }
        out.push(tag_set.id(tag).expect("class is in the tag set"));
        prev = Some(tag);
    }
    out
}
