use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sentence_mentions, train_model, EpochLog, TrainConfig, TrainError, TrainOutcome};
use crate::augment::source_doc_id;
use crate::encoding::{Origin, TagSet, TaggedSentence};
use crate::eval::{partial_match_f1, Denominator, MentionsByDoc, ScoreReport};
use crate::layers::{CharVocab, Embeddings, Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_docs: Vec<String>,
    pub validation_docs: Vec<String>,
}

/// Document-level folds. Validation only ever sees original, first-level
/// sentences; the flags control the extra sentence kinds used for training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub include_overlap_levels: bool,
    pub include_translations: bool,
}

impl FoldPlan {
    /// Shuffles the distinct source documents with `seed` and deals them
    /// round-robin into `k` folds.
    pub fn build(
        doc_ids: &[String],
        k: usize,
        seed: u64,
        include_overlap_levels: bool,
        include_translations: bool,
    ) -> Result<Self, TrainError> {
        let mut docs: Vec<String> = doc_ids
            .iter()
            .map(|d| source_doc_id(d).to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if k == 0 || docs.len() < k {
            return Err(TrainError::TooFewDocuments { docs: docs.len(), folds: k });
        }
        docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut buckets = vec![Vec::new(); k];
        for (i, d) in docs.into_iter().enumerate() {
            buckets[i % k].push(d);
        }
        let folds = (0..k)
            .map(|f| {
                let mut validation_docs = buckets[f].clone();
                validation_docs.sort();
                let mut train_docs: Vec<String> = (0..k).filter(|&o| o != f).flat_map(|o| buckets[o].clone()).collect();
                train_docs.sort();
                Fold {
                    train_docs,
                    validation_docs,
                }
            })
            .collect();
        Ok(FoldPlan {
            folds,
            include_overlap_levels,
            include_translations,
        })
    }

    /// Training and validation sentences of fold `f`.
    pub fn split(&self, f: usize, sentences: &[TaggedSentence]) -> (Vec<TaggedSentence>, Vec<TaggedSentence>) {
        let fold = &self.folds[f];
        let train_docs: BTreeSet<&str> = fold.train_docs.iter().map(String::as_str).collect();
        let val_docs: BTreeSet<&str> = fold.validation_docs.iter().map(String::as_str).collect();
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for s in sentences {
            let src = source_doc_id(&s.doc_id);
            let keep = match s.origin {
                Origin::Original => true,
                Origin::OverlapLevel => self.include_overlap_levels,
                Origin::Translation => self.include_translations,
            };
            if train_docs.contains(src) && keep {
                train.push(s.clone());
            } else if val_docs.contains(src) && s.origin == Origin::Original && s.level == 1 {
                validation.push(s.clone());
            }
        }
        (train, validation)
    }
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub folds: Vec<TrainOutcome>,
    pub out_of_fold: MentionsByDoc,
    /// Out-of-fold predictions scored with partial matching at 0.5.
    pub report: ScoreReport,
}

/// Trains one model per fold and scores the pooled out-of-fold predictions
/// against `gold`. Fold `f` initializes its model with `seed + f`.
pub fn cross_validate(
    sentences: &[TaggedSentence],
    gold: &MentionsByDoc,
    model_config: &ModelConfig,
    tag_set: &TagSet,
    train_config: &TrainConfig,
    embeddings: &Embeddings,
    on_epoch: &mut dyn FnMut(usize, &EpochLog),
) -> Result<CvOutcome, TrainError> {
    let ids: Vec<String> = sentences.iter().map(|s| s.doc_id.clone()).collect();
    let plan = FoldPlan::build(
        &ids,
        train_config.folds,
        train_config.seed,
        model_config.use_overlap_levels,
        model_config.use_translations,
    )?;
    let mut folds = Vec::new();
    let mut out_of_fold: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for f in 0..plan.folds.len() {
        let (train, validation) = plan.split(f, sentences);
        let vocab = CharVocab::from_sentences(&train);
        let model = Model::new(model_config.clone(), tag_set.clone(), vocab, train_config.seed + f as u64);
        let outcome = train_model(model, &train, &validation, embeddings, train_config, &mut |l| on_epoch(f, l))?;
        for s in &validation {
            let tags = outcome.model.predict(s, embeddings)?;
            out_of_fold
                .entry(s.doc_id.clone())
                .or_default()
                .extend(sentence_mentions(s, &tags, tag_set)?);
        }
        for d in &plan.folds[f].validation_docs {
            out_of_fold.entry(d.clone()).or_default();
        }
        folds.push(outcome);
    }
    for mentions in out_of_fold.values_mut() {
        for (i, m) in mentions.iter_mut().enumerate() {
            m.id = format!("T{}", i + 1);
        }
    }
    let report = partial_match_f1(gold, &out_of_fold, 0.5, Denominator::Gold)?;
    Ok(CvOutcome {
        plan,
        folds,
        out_of_fold,
        report,
    })
}
