use std::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};

use crate::corpus::{is_strippable, EntityClass, Mention, SentenceBoundary, Span};

/// A single-span mention produced by joining the spans of an annotated mention.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearMention {
    pub id: String,
    pub class: EntityClass,
    pub span: Span,
    /// Number of spans of the annotated mention this piece came from.
    pub source_spans: usize,
}

impl LinearMention {
    pub fn to_mention(&self) -> Mention {
        Mention::new(self.id.clone(), self.class, vec![self.span])
    }
}

/// Merges consecutive spans separated by at most `max_gap` characters; the
/// remaining pieces become separate mentions of the same class.
pub fn join_discontiguous(mentions: &[Mention], max_gap: usize) -> Vec<LinearMention> {
    let mut out = Vec::new();
    for m in mentions {
        let mut pieces: Vec<Span> = Vec::new();
        for &span in &m.spans {
            match pieces.last_mut() {
                Some(last) if span.start.saturating_sub(last.end) <= max_gap => {
                    last.end = last.end.max(span.end);
                }
                _ => pieces.push(span),
            }
        }
        let multiple = pieces.len() > 1;
        out.extend(pieces.into_iter().enumerate().map(|(k, span)| LinearMention {
            id: if multiple {
                format!("{}.{}", m.id, k + 1)
            } else {
                m.id.clone()
            },
            class: m.class,
            span,
            source_spans: m.spans.len(),
        }));
    }
    out
}

/// Cuts mentions that cross sentence boundaries into per-sentence pieces,
/// trimming whitespace and punctuation at the cut.
pub fn split_at_sentences(
    mentions: Vec<LinearMention>,
    sentences: &[SentenceBoundary],
    chars: &[char],
) -> Vec<LinearMention> {
    let mut out = Vec::with_capacity(mentions.len());
    for m in mentions {
        let pieces: Vec<Span> = sentences
            .iter()
            .filter_map(|b| {
                let mut s = m.span.start.max(b.start);
                let mut e = m.span.end.min(b.end);
                while s < e && is_strippable(chars[s]) {
                    s += 1;
                }
                while e > s && is_strippable(chars[e - 1]) {
                    e -= 1;
                }
                (s < e).then_some(Span::new(s, e))
            })
            .collect();
        if pieces.len() == 1 {
            out.push(LinearMention {
                span: pieces[0],
                ..m
            });
        } else {
            for (k, span) in pieces.into_iter().enumerate() {
                out.push(LinearMention {
                    id: format!("{}/{}", m.id, k + 1),
                    span,
                    ..m.clone()
                });
            }
        }
    }
    out
}

/// Level ordering: fewest source spans, then longest, then leftmost, then the
/// more frequent class, then class name.
fn level_order(a: &LinearMention, b: &LinearMention) -> Ordering {
    a.source_spans
        .cmp(&b.source_spans)
        .then_with(|| b.span.len().cmp(&a.span.len()))
        .then_with(|| a.span.start.cmp(&b.span.start))
        .then_with(|| Reverse(a.class.reference_count()).cmp(&Reverse(b.class.reference_count())))
        .then_with(|| a.class.name().cmp(b.class.name()))
        .then_with(|| a.id.cmp(&b.id))
}

/// Indices of `mentions` in level-selection order.
pub fn selection_order(mentions: &[LinearMention]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mentions.len()).collect();
    order.sort_by(|&i, &j| level_order(&mentions[i], &mentions[j]));
    order
}

/// Stratifies mentions into levels 1..n so that no two mentions on the same
/// level overlap. Mentions are taken in [`selection_order`] and each goes to
/// the lowest level where it fits. Returns the level of each mention.
pub fn assign_levels(mentions: &[LinearMention]) -> Vec<usize> {
    let mut levels = vec![0usize; mentions.len()];
    let mut occupied: Vec<Vec<Span>> = Vec::new();
    for i in selection_order(mentions) {
        let span = mentions[i].span;
        let k = occupied
            .iter()
            .position(|spans| spans.iter().all(|s| !s.overlaps(&span)))
            .unwrap_or_else(|| {
                occupied.push(Vec::new());
                occupied.len() - 1
            });
        occupied[k].push(span);
        levels[i] = k + 1;
    }
    levels
}

/// For each occupied level, the mentions to tag in that level's copy of the
/// sentence: its own mentions, plus every mention from other levels that does
/// not conflict with anything already placed (lower levels first, each in
/// selection order).
pub fn level_views(mentions: &[LinearMention], levels: &[usize]) -> Vec<Vec<usize>> {
    let n_levels = levels.iter().copied().max().unwrap_or(0);
    let order = selection_order(mentions);
    let mut by_level: Vec<usize> = order.clone();
    by_level.sort_by_key(|&i| levels[i]);
    (1..=n_levels)
        .map(|k| {
            let mut chosen: Vec<usize> = order.iter().copied().filter(|&i| levels[i] == k).collect();
            for &i in &by_level {
                if levels[i] == k {
                    continue;
                }
                let span = mentions[i].span;
                if chosen.iter().all(|&j| !mentions[j].span.overlaps(&span)) {
                    chosen.push(i);
                }
            }
            chosen.sort_by_key(|&i| mentions[i].span.start);
            chosen
        })
        .collect()
}
