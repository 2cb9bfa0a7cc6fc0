use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState, EarlyStopping, PlateauSchedule, TrainConfig, TrainError};
use crate::autograd::{Graph, Tensor};
use crate::corpus::Mention;
use crate::encoding::{decode_iob2, repair_iob2, TagId, TagSet, TaggedSentence};
use crate::eval::{exact_match_f1, MentionsByDoc};
use crate::layers::{Embeddings, Model};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Rate used during the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-validation model, or the final one without validation.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_f1: Option<f64>,
    pub stopped_early: bool,
}

/// Groups sentence indices by length into batches of at most `batch_size`;
/// ties in length and the batch order are shuffled by `rng`.
pub fn make_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut keyed: Vec<(usize, u64, usize)> = lengths.iter().enumerate().map(|(i, &n)| (n, rng.random(), i)).collect();
    keyed.sort_unstable();
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Mentions of one tagged sentence; tags are repaired first.
pub fn sentence_mentions(sentence: &TaggedSentence, tags: &[TagId], tag_set: &TagSet) -> Result<Vec<Mention>, TrainError> {
    let tags = repair_iob2(tags, tag_set);
    Ok(decode_iob2(&sentence.tokens, &tags, tag_set)?)
}

/// Exact-span micro-F1 of the model's predictions against the sentences'
/// own tags.
pub fn evaluate_exact(model: &Model, sentences: &[TaggedSentence], embeddings: &Embeddings) -> Result<f64, TrainError> {
    let mut gold = MentionsByDoc::new();
    let mut pred = MentionsByDoc::new();
    for s in sentences {
        let p = model.predict(s, embeddings)?;
        gold.entry(s.doc_id.clone())
            .or_default()
            .extend(sentence_mentions(s, &s.tags, &model.tag_set)?);
        pred.entry(s.doc_id.clone())
            .or_default()
            .extend(sentence_mentions(s, &p, &model.tag_set)?);
    }
    Ok(exact_match_f1(&gold, &pred).micro.f1)
}

fn epoch_pass(
    model: &mut Model,
    train: &[TaggedSentence],
    embeddings: &Embeddings,
    config: &TrainConfig,
    adam: &mut AdamState,
    lr: f64,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let lengths: Vec<usize> = train.iter().map(TaggedSentence::len).collect();
    let mut total = 0.0;
    for batch in make_batches(&lengths, config.batch_size, rng) {
        let mut grads: Vec<Tensor> = model.store.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        let mut batch_loss = 0.0;
        for &i in &batch {
            let mut g = Graph::new(&model.store);
            let loss = model.loss(&mut g, &train[i], embeddings, Some(&mut *rng))?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    doc_ids: batch.iter().map(|&j| train[j].doc_id.clone()).collect(),
                });
            }
            batch_loss += value;
            for (id, t) in g.backward(loss).map_err(crate::layers::LayerError::from)?.into_params() {
                grads[id.0].add_assign(&t);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|t| t.scale_assign(scale));
        adam_step(&mut model.store, &grads, adam, lr);
        total += batch_loss;
    }
    Ok(total / train.len().max(1) as f64)
}

/// Trains `model` on `train`. With `fixed_epochs` set, runs exactly that
/// many epochs; otherwise validates after every epoch, halving the rate on
/// plateaus and stopping early, and returns the best-validation weights.
/// `on_epoch` sees each log line as soon as it is produced.
pub fn train_model(
    mut model: Model,
    train: &[TaggedSentence],
    validation: &[TaggedSentence],
    embeddings: &Embeddings,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::for_store(&model.store);
    let mut schedule = PlateauSchedule::new(config.lr0, config.lr_halving.min_delta, config.lr_halving.patience);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let validate = config.fixed_epochs.is_none() && !validation.is_empty();
    let epochs = config.fixed_epochs.unwrap_or(config.max_epochs);

    let mut best_store = None;
    let mut log = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=epochs {
        let lr = schedule.lr;
        let train_loss = epoch_pass(&mut model, train, embeddings, config, &mut adam, lr, epoch, &mut rng)?;
        let val_f1 = if validate {
            Some(evaluate_exact(&model, validation, embeddings)?)
        } else {
            None
        };
        let line = EpochLog {
            epoch,
            lr,
            train_loss,
            val_f1,
        };
        log::info!("epoch {epoch}: lr {lr:.6} loss {train_loss:.4} val_f1 {val_f1:?}");
        on_epoch(&line);
        log.push(line);
        if let Some(f1) = val_f1 {
            let (improved, stop) = stopper.observe(epoch, f1);
            if improved {
                best_store = Some(model.store.clone());
            }
            if schedule.observe(f1) {
                log::info!("learning rate halved to {}", schedule.lr);
            }
            if stop {
                stopped_early = true;
                break;
            }
        }
    }
    if let Some(store) = best_store {
        model.store = store;
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch: if validate { stopper.best_epoch } else { epochs },
        best_f1: stopper.best,
        stopped_early,
    })
}
