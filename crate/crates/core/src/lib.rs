//! Sequence tagging for systematic-review entity extraction: standoff
//! corpus handling, multi-level IOB2 encoding, round-trip translation
//! augmentation, an alternating highway-LSTM-CRF tagger trained from
//! scratch, ensembling and partial-match scoring.

pub mod augment;
pub mod autograd;
pub mod corpus;
pub mod crf;
pub mod encoding;
pub mod eval;
pub mod layers;
pub mod train;
