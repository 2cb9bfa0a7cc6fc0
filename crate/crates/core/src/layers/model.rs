use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    alternating_highway_lstm, assemble_embeddings, stacked_bilstm, standard_mask, CellIds,
    CharCnnIds, CharVocab, DropoutMode, Embeddings, LayerError, Layout, ModelConfig,
};
use crate::autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::crf::{negative_log_likelihood, viterbi_decode, CrfParamIds, CrfParams};
use crate::encoding::{build_transition_constraints, TagId, TagSet, TaggedSentence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionIds {
    /// states × tags
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerIds {
    Alternating(Vec<CellIds>),
    StackedBi(Vec<[CellIds; 2]>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParamIds {
    pub cnn: CharCnnIds,
    pub layers: LayerIds,
    pub projection: ProjectionIds,
    pub crf: CrfParamIds,
}

/// Stacks the per-token states, applies d3 when a rate and RNG are given,
/// then the affine map to tag scores.
pub fn project_to_tags(
    g: &mut Graph<'_>,
    states: &[Var],
    projection: &ProjectionIds,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<Var, LayerError> {
    if states.is_empty() {
        return Err(LayerError::EmptySequence);
    }
    let mut m = g.stack(states)?;
    if let Some((p, rng)) = dropout {
        if p > 0.0 {
            let mask = standard_mask(g.shape(m), p, rng);
            m = g.dropout_apply(m, mask)?;
        }
    }
    let w = g.param(projection.weight);
    let b = g.param(projection.bias);
    let scores = g.matmul(m, w)?;
    Ok(g.add(scores, b)?)
}

/// Closed-form number of trainable scalars. Frozen word and contextual
/// vectors are not counted.
pub fn count_parameters(config: &ModelConfig, char_vocab_size: usize, num_tags: usize) -> usize {
    let ec = &config.embedding;
    let chars = char_vocab_size * ec.char_emb_dim + ec.cnn_kernel * ec.char_emb_dim * ec.char_out_dim + ec.char_out_dim;
    let h = config.hidden;
    let mut lstm = 0;
    let mut input = config.input_dim();
    for _ in 0..config.num_layers {
        match config.layout {
            Layout::Alternating => {
                lstm += CellIds::num_scalars(h, input, config.highway);
                input = h;
            }
            Layout::StackedBi => {
                lstm += 2 * CellIds::num_scalars(h, input, config.highway);
                input = 2 * h;
            }
        }
    }
    let projection = config.output_dim() * num_tags + num_tags;
    let crf = num_tags * num_tags + 2 * num_tags;
    chars + lstm + projection + crf
}

/// A tagger: configuration, vocabularies and all trainable parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub tag_set: TagSet,
    pub char_vocab: CharVocab,
    pub store: ParamStore,
    pub ids: ModelParamIds,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut dyn RngCore) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if bound > 0.0 {
        for v in t.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    t
}

impl Model {
    /// Builds and initializes all parameters from `seed`. Parameter names
    /// and creation order depend only on the configuration and vocabularies.
    pub fn new(config: ModelConfig, tag_set: TagSet, char_vocab: CharVocab, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ec = config.embedding.clone();

        let mut emb = uniform(&[char_vocab.len(), ec.char_emb_dim], 0.1, &mut rng);
        emb.data_mut()[..ec.char_emb_dim].iter_mut().for_each(|v| *v = 0.0);
        let cnn_in = ec.cnn_kernel * ec.char_emb_dim;
        let cnn = CharCnnIds {
            embedding: store.add("chars.embedding", emb),
            weight: store.add(
                "chars.conv.weight",
                uniform(&[cnn_in, ec.char_out_dim], 1.0 / (cnn_in as f64).sqrt(), &mut rng),
            ),
            bias: store.add("chars.conv.bias", Tensor::zeros(&[ec.char_out_dim])),
            kernel: ec.cnn_kernel,
        };

        let h = config.hidden;
        let mut input = config.input_dim();
        let layers = match config.layout {
            Layout::Alternating => {
                let mut cells = Vec::new();
                for k in 0..config.num_layers {
                    cells.push(CellIds::register(&mut store, &format!("lstm.{k}"), h, input, config.highway, &mut rng));
                    input = h;
                }
                LayerIds::Alternating(cells)
            }
            Layout::StackedBi => {
                let mut pairs = Vec::new();
                for k in 0..config.num_layers {
                    let f = CellIds::register(&mut store, &format!("lstm.{k}.fwd"), h, input, config.highway, &mut rng);
                    let b = CellIds::register(&mut store, &format!("lstm.{k}.bwd"), h, input, config.highway, &mut rng);
                    pairs.push([f, b]);
                    input = 2 * h;
                }
                LayerIds::StackedBi(pairs)
            }
        };

        let out = config.output_dim();
        let k = tag_set.len();
        let projection = ProjectionIds {
            weight: store.add("projection.weight", uniform(&[out, k], 1.0 / (out as f64).sqrt(), &mut rng)),
            bias: store.add("projection.bias", Tensor::zeros(&[k])),
        };
        let crf = CrfParamIds::register(&mut store, "crf", CrfParams::zeros(k));

        Model {
            config,
            tag_set,
            char_vocab,
            store,
            ids: ModelParamIds {
                cnn,
                layers,
                projection,
                crf,
            },
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn crf_params(&self) -> CrfParams {
        self.ids.crf.read(&self.store)
    }

    /// Emission scores (T × tags). Dropout is active iff `rng` is given.
    pub fn emissions(
        &self,
        g: &mut Graph<'_>,
        sentence: &TaggedSentence,
        embeddings: &Embeddings,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, LayerError> {
        let inputs = assemble_embeddings(
            g,
            sentence,
            embeddings,
            &self.ids.cnn,
            &self.char_vocab,
            &self.config,
            rng.as_deref_mut(),
        )?;
        let states = match &self.ids.layers {
            LayerIds::Alternating(cells) => {
                alternating_highway_lstm(g, cells, &inputs, &self.config, rng.as_deref_mut())?
            }
            LayerIds::StackedBi(pairs) => stacked_bilstm(g, pairs, &inputs, &self.config, rng.as_deref_mut())?,
        };
        let d3 = match self.config.dropout_mode {
            DropoutMode::Full => self.config.dropout.d3,
            DropoutMode::BetweenLayersOnly => 0.0,
        };
        project_to_tags(g, &states, &self.ids.projection, rng.map(|r| (d3, r)))
    }

    /// CRF negative log-likelihood of the sentence's gold tags.
    pub fn loss(
        &self,
        g: &mut Graph<'_>,
        sentence: &TaggedSentence,
        embeddings: &Embeddings,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, LayerError> {
        let e = self.emissions(g, sentence, embeddings, rng)?;
        Ok(negative_log_likelihood(g, &self.ids.crf, e, &sentence.tags)?)
    }

    /// Eval-mode emission scores as a plain tensor.
    pub fn score(&self, sentence: &TaggedSentence, embeddings: &Embeddings) -> Result<Tensor, LayerError> {
        let mut g = Graph::new(&self.store);
        let e = self.emissions(&mut g, sentence, embeddings, None)?;
        Ok(g.value(e).clone())
    }

    /// Constrained Viterbi decoding in eval mode.
    pub fn predict(&self, sentence: &TaggedSentence, embeddings: &Embeddings) -> Result<Vec<TagId>, LayerError> {
        let e = self.score(sentence, embeddings)?;
        let mask = build_transition_constraints(&self.tag_set);
        Ok(viterbi_decode(&self.crf_params(), &e, Some(&mask))?.0)
    }
}
