use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{standard_mask, DropoutMode, LayerError, ModelConfig};
use crate::autograd::{Graph, ParamId, Tensor, Var};
use crate::encoding::TaggedSentence;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Characters seen in training, after the PAD and UNK slots. Case is kept.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharVocab {
    chars: Vec<char>,
}

impl CharVocab {
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<char> = tokens.into_iter().flat_map(str::chars).collect();
        CharVocab {
            chars: set.into_iter().collect(),
        }
    }

    pub fn from_sentences(sentences: &[TaggedSentence]) -> Self {
        CharVocab::build(sentences.iter().flat_map(|s| s.tokens.iter().map(|t| t.text.as_str())))
    }

    /// Vocabulary size including PAD and UNK.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.chars.binary_search(&c).map_or(UNK, |i| i + 2)
    }

    pub fn encode(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.id(c)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharCnnIds {
    /// vocab × char_emb_dim
    pub embedding: ParamId,
    /// (kernel · char_emb_dim) × filters
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
}

/// Embeds the characters, pads on the right with PAD up to the kernel width,
/// convolves, applies ReLU and max-pools over positions.
pub fn char_cnn(g: &mut Graph<'_>, cnn: &CharCnnIds, char_ids: &[usize]) -> Result<Var, LayerError> {
    if char_ids.is_empty() {
        return Err(LayerError::EmptyToken);
    }
    let mut ids = char_ids.to_vec();
    while ids.len() < cnn.kernel {
        ids.push(PAD);
    }
    let table = g.param(cnn.embedding);
    let weight = g.param(cnn.weight);
    let bias = g.param(cnn.bias);
    let chars = g.gather_rows(table, &ids)?;
    let windows = g.unfold(chars, cnn.kernel)?;
    let conv = g.matmul(windows, weight)?;
    let conv = g.add(conv, bias)?;
    let act = g.relu(conv)?;
    Ok(g.max_over(act)?)
}

/// Frozen word vectors; unknown words map to the zero vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordTable {
    pub fn empty(dim: usize) -> Self {
        WordTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<(), LayerError> {
        let word = word.into();
        if vector.len() != self.dim {
            return Err(LayerError::VectorDim {
                token: word,
                got: vector.len(),
                expected: self.dim,
            });
        }
        self.vectors.insert(word, vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Reads `token v1 v2 ... vD` lines; the first occurrence of a token wins.
    pub fn read<R: BufRead>(reader: R, dim: usize, label: &str) -> Result<Self, LayerError> {
        let mut table = WordTable::empty(dim);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| LayerError::Io {
                path: label.to_string(),
                source,
            })?;
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let Some(word) = parts.next() else { continue };
            let parse_err = |message: String| LayerError::Parse {
                path: label.to_string(),
                line: i + 1,
                message,
            };
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|e| parse_err(format!("'{p}': {e}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            if values.len() != dim {
                return Err(parse_err(format!("{} values, expected {dim}", values.len())));
            }
            table.vectors.entry(word.to_string()).or_insert(values);
        }
        Ok(table)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self, LayerError> {
        let file = std::fs::File::open(path).map_err(|source| LayerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        WordTable::read(std::io::BufReader::new(file), dim, &path.display().to_string())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ContextKey<'a> {
    pub doc_id: &'a str,
    pub sentence_index: usize,
    pub token_index: usize,
    pub token: &'a str,
}

/// Source of precomputed per-token contextual vectors (one per LM layer).
pub trait ContextualProvider {
    fn dim(&self) -> usize;
    fn layers(&self, key: &ContextKey<'_>) -> Option<Vec<Vec<f64>>>;
    /// Whether a missing vector is an error rather than zeros.
    fn strict(&self) -> bool {
        false
    }
}

/// Zero vectors for every token.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroContextual {
    pub dim: usize,
}

impl ContextualProvider for ZeroContextual {
    fn dim(&self) -> usize {
        self.dim
    }

    fn layers(&self, _key: &ContextKey<'_>) -> Option<Vec<Vec<f64>>> {
        Some(vec![vec![0.0; self.dim]])
    }
}

#[derive(Deserialize)]
struct ContextRecord {
    doc_id: String,
    sentence_index: usize,
    token_index: usize,
    layers: Vec<Vec<f64>>,
}

/// Contextual vectors from JSON lines of
/// `{"doc_id", "sentence_index", "token_index", "layers": [[..], ..]}`.
#[derive(Clone, Debug, Default)]
pub struct JsonlContextual {
    dim: usize,
    strict: bool,
    vectors: HashMap<(String, usize, usize), Vec<Vec<f64>>>,
}

impl JsonlContextual {
    pub fn read<R: BufRead>(reader: R, dim: usize, strict: bool, label: &str) -> Result<Self, LayerError> {
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| LayerError::Io {
                path: label.to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| LayerError::Parse {
                path: label.to_string(),
                line: i + 1,
                message,
            };
            let rec: ContextRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            if rec.layers.is_empty() || rec.layers.iter().any(|l| l.len() != dim) {
                return Err(parse_err(format!("layers must be non-empty with {dim} values each")));
            }
            vectors.insert((rec.doc_id, rec.sentence_index, rec.token_index), rec.layers);
        }
        Ok(JsonlContextual { dim, strict, vectors })
    }

    pub fn load(path: &Path, dim: usize, strict: bool) -> Result<Self, LayerError> {
        let file = std::fs::File::open(path).map_err(|source| LayerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        JsonlContextual::read(std::io::BufReader::new(file), dim, strict, &path.display().to_string())
    }
}

impl ContextualProvider for JsonlContextual {
    fn dim(&self) -> usize {
        self.dim
    }

    fn layers(&self, key: &ContextKey<'_>) -> Option<Vec<Vec<f64>>> {
        self.vectors
            .get(&(key.doc_id.to_string(), key.sentence_index, key.token_index))
            .cloned()
    }

    fn strict(&self) -> bool {
        self.strict
    }
}

/// The frozen inputs of the embedding layer.
pub struct Embeddings {
    pub words: WordTable,
    pub contextual: Box<dyn ContextualProvider + Send + Sync>,
}

impl Embeddings {
    /// No word vectors and a zero contextual provider, sized for `config`.
    pub fn zero(config: &ModelConfig) -> Self {
        Embeddings {
            words: WordTable::empty(config.embedding.word_dim),
            contextual: Box::new(ZeroContextual {
                dim: config.embedding.contextual_dim,
            }),
        }
    }
}

/// Per-token input vectors `[word; mean(contextual layers); char_cnn]`, with
/// d1 applied when `rng` is given, followed by the undropped extra features.
pub fn assemble_embeddings(
    g: &mut Graph<'_>,
    sentence: &TaggedSentence,
    embeddings: &Embeddings,
    cnn: &CharCnnIds,
    vocab: &CharVocab,
    config: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Var>, LayerError> {
    if sentence.is_empty() {
        return Err(LayerError::EmptySequence);
    }
    let ec = &config.embedding;
    if embeddings.words.dim() != ec.word_dim {
        return Err(LayerError::VectorDim {
            token: "<word table>".into(),
            got: embeddings.words.dim(),
            expected: ec.word_dim,
        });
    }
    if embeddings.contextual.dim() != ec.contextual_dim {
        return Err(LayerError::VectorDim {
            token: "<contextual provider>".into(),
            got: embeddings.contextual.dim(),
            expected: ec.contextual_dim,
        });
    }
    let d1 = match config.dropout_mode {
        DropoutMode::Full => config.dropout.d1,
        DropoutMode::BetweenLayersOnly => 0.0,
    };
    let mut out = Vec::with_capacity(sentence.len());
    for (i, token) in sentence.tokens.iter().enumerate() {
        let mut frozen = Vec::with_capacity(ec.word_dim + ec.contextual_dim);
        match embeddings.words.get(&token.text) {
            Some(v) => frozen.extend_from_slice(v),
            None => frozen.resize(ec.word_dim, 0.0),
        }
        if ec.contextual_dim > 0 {
            let key = ContextKey {
                doc_id: &sentence.doc_id,
                sentence_index: sentence.sentence_index,
                token_index: i,
                token: &token.text,
            };
            match embeddings.contextual.layers(&key) {
                Some(layers) => {
                    let n = layers.len() as f64;
                    let mut mean = vec![0.0; ec.contextual_dim];
                    for layer in &layers {
                        for (m, v) in mean.iter_mut().zip(layer) {
                            *m += v;
                        }
                    }
                    frozen.extend(mean.into_iter().map(|m| m / n));
                }
                None if embeddings.contextual.strict() => {
                    return Err(LayerError::MissingContextual {
                        token: token.text.clone(),
                        doc_id: sentence.doc_id.clone(),
                        sentence_index: sentence.sentence_index,
                        token_index: i,
                    })
                }
                None => frozen.resize(ec.word_dim + ec.contextual_dim, 0.0),
            }
        }
        let chars = char_cnn(g, cnn, &vocab.encode(&token.text))?;
        let mut v = if frozen.is_empty() {
            chars
        } else {
            let frozen = g.constant(Tensor::vector(frozen));
            g.concat(&[frozen, chars])?
        };
        if let Some(r) = rng.as_deref_mut() {
            if d1 > 0.0 {
                let mask = standard_mask(&[ec.base_dim()], d1, r);
                v = g.dropout_apply(v, mask)?;
            }
        }
        let f = sentence.features.get(i).copied().unwrap_or_default();
        let mut extra = vec![f.relative_position];
        if config.use_in_title {
            extra.push(if f.in_title == Some(true) { 1.0 } else { 0.0 });
        }
        let extra = g.constant(Tensor::vector(extra));
        out.push(g.concat(&[v, extra])?);
    }
    Ok(out)
}
