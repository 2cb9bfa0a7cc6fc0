use std::collections::BTreeMap;

use super::TrainError;
use crate::encoding::{repair_iob2, TagId, TagSet, TaggedSentence};
use crate::layers::{Embeddings, Model};

/// Per-token plurality vote over `predictions`; ties go to the tag whose
/// name sorts first. The result is repaired to valid IOB2.
pub fn ensemble_vote(predictions: &[Vec<TagId>], tag_set: &TagSet) -> Result<Vec<TagId>, TrainError> {
    let first = predictions.first().ok_or(TrainError::NoModels)?;
    if let Some((index, p)) = predictions.iter().enumerate().find(|(_, p)| p.len() != first.len()) {
        return Err(TrainError::LengthMismatch {
            index,
            got: p.len(),
            expected: first.len(),
        });
    }
    let voted: Vec<TagId> = (0..first.len())
        .map(|t| {
            let mut counts: BTreeMap<String, (usize, TagId)> = BTreeMap::new();
            for p in predictions {
                counts.entry(tag_set.name(p[t])).or_insert((0, p[t])).0 += 1;
            }
            let top = counts.values().map(|c| c.0).max().unwrap_or(0);
            // BTreeMap iterates names in order, so the first hit is the tie-break
            counts.values().find(|c| c.0 == top).map(|c| c.1).unwrap_or_else(|| tag_set.outside())
        })
        .collect();
    Ok(repair_iob2(&voted, tag_set))
}

/// Decodes `sentence` with every model and votes.
pub fn ensemble_predict(models: &[Model], sentence: &TaggedSentence, embeddings: &Embeddings) -> Result<Vec<TagId>, TrainError> {
    let first = models.first().ok_or(TrainError::NoModels)?;
    let predictions = models
        .iter()
        .map(|m| m.predict(sentence, embeddings))
        .collect::<Result<Vec<_>, _>>()?;
    ensemble_vote(&predictions, &first.tag_set)
}
