#![allow(dead_code)]

use srtag::autograd::{ParamId, ParamStore, Tensor};
use srtag::corpus::Token;
use srtag::encoding::{Origin, TagId, TaggedSentence, TokenFeatures};

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central finite differences of `loss` with respect to every element of a
/// stored parameter.
pub fn numeric_grad(
    store: &mut ParamStore,
    id: ParamId,
    h: f64,
    loss: &mut dyn FnMut(&ParamStore) -> f64,
) -> Vec<f64> {
    let n = store.get(id).len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = orig + h;
        let up = loss(store);
        store.get_mut(id).data_mut()[i] = orig - h;
        let down = loss(store);
        store.get_mut(id).data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gate_row(w: &Tensor, r: usize, h: &[f64], x: &[f64]) -> f64 {
    let row = w.row(r);
    let mut s = row[0];
    for (k, v) in h.iter().enumerate() {
        s += row[1 + k] * v;
    }
    for (k, v) in x.iter().enumerate() {
        s += row[1 + h.len() + k] * v;
    }
    s
}

pub struct CellWeights {
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub highway: Option<(Tensor, Tensor)>,
}

/// Scalar loops over the cell equations, from zero states.
pub fn lstm_oracle(w: &CellWeights, inputs: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let hidden = w.w_c.rows();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = vec![Vec::new(); inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let x = &inputs[t];
        let mut nh = vec![0.0; hidden];
        let mut nc = vec![0.0; hidden];
        for r in 0..hidden {
            let ct = gate_row(&w.w_c, r, &h, x).tanh();
            let o = sigmoid(gate_row(&w.w_o, r, &h, x));
            let f = sigmoid(gate_row(&w.w_f, r, &h, x));
            let i = sigmoid(gate_row(&w.w_i, r, &h, x));
            nc[r] = f * c[r] + i * ct;
            let h_tilde = o * nc[r].tanh();
            nh[r] = match &w.highway {
                Some((ww, wh)) => {
                    let g = sigmoid(gate_row(ww, r, &h, x));
                    let lin: f64 = wh.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
                    g * h_tilde + (1.0 - g) * lin
                }
                None => h_tilde,
            };
        }
        h = nh;
        c = nc;
        out[t] = h.clone();
    }
    out
}

/// Direct convolution with explicit loops: kernel-wide windows over the
/// padded character embeddings, ReLU, max over positions.
pub fn conv_oracle(emb: &Tensor, weight: &Tensor, bias: &[f64], ids: &[usize], kernel: usize) -> Vec<f64> {
    let mut ids = ids.to_vec();
    while ids.len() < kernel {
        ids.push(0);
    }
    let d = emb.cols();
    let filters = weight.cols();
    let mut best = vec![f64::NEG_INFINITY; filters];
    for p in 0..=ids.len() - kernel {
        for f in 0..filters {
            let mut s = bias[f];
            for k in 0..kernel {
                for j in 0..d {
                    s += emb.get2(ids[p + k], j) * weight.get2(k * d + j, f);
                }
            }
            best[f] = best[f].max(s.max(0.0));
        }
    }
    best
}

pub fn sentence(doc_id: &str, words: &[&str], tags: Vec<TagId>) -> TaggedSentence {
    let mut tokens = Vec::new();
    let mut pos = 0;
    for w in words {
        let len = w.chars().count();
        tokens.push(Token {
            text: w.to_string(),
            start: pos,
            end: pos + len,
            sentence_index: 0,
        });
        pos += len + 1;
    }
    let n = tokens.len();
    TaggedSentence {
        doc_id: doc_id.to_string(),
        sentence_index: 0,
        level: 1,
        tokens,
        tags,
        features: (0..n)
            .map(|i| TokenFeatures {
                relative_position: i as f64 / n as f64,
                in_title: None,
            })
            .collect(),
        origin: Origin::Original,
    }
}

/// Ten documents of five templated sentences each (50 sentences) with
/// mentions of six classes drawn from disjoint word lists.
pub fn synthetic_corpus(seed: u64) -> Vec<srtag::corpus::Document> {
    use rand::{Rng, SeedableRng};
    use srtag::corpus::{Document, EntityClass as C, Mention, Span};

    let species = ["Rats", "Mice", "Rabbits", "Hamsters"];
    let doses = ["5", "10", "20", "50", "100"];
    let units = ["mg/kg", "ppm", "g/L"];
    let articles = ["apigenin", "genistein", "bisphenol", "atrazine", "quercetin"];
    let routes = ["gavage", "injection", "inhalation"];
    let days = ["7", "14", "28", "90"];

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for d in 0..10 {
        let mut text = String::new();
        let mut mentions = Vec::new();
        for _ in 0..5 {
            let mut pick = |words: &[&'static str]| words[rng.random_range(0..words.len())];
            let parts: Vec<(Option<C>, &str)> = match pick(&["a", "b", "c"]) {
                "a" => vec![
                    (Some(C::Species), pick(&species)),
                    (None, "received"),
                    (Some(C::Dose), pick(&doses)),
                    (Some(C::DoseUnits), pick(&units)),
                    (None, "of"),
                    (Some(C::TestArticle), pick(&articles)),
                    (None, "by"),
                    (Some(C::DoseRoute), pick(&routes)),
                    (None, "for"),
                    (Some(C::DoseDuration), pick(&days)),
                    (None, "days"),
                ],
                "b" => vec![
                    (None, "The"),
                    (Some(C::TestArticle), pick(&articles)),
                    (None, "was"),
                    (None, "given"),
                    (None, "by"),
                    (Some(C::DoseRoute), pick(&routes)),
                    (None, "to"),
                    (Some(C::Species), pick(&species)),
                ],
                _ => vec![
                    (Some(C::Species), pick(&species)),
                    (None, "were"),
                    (None, "dosed"),
                    (None, "for"),
                    (Some(C::DoseDuration), pick(&days)),
                    (None, "days"),
                    (None, "with"),
                    (Some(C::Dose), pick(&doses)),
                    (Some(C::DoseUnits), pick(&units)),
                ],
            };
            for (i, (class, word)) in parts.iter().enumerate() {
                if i > 0 {
                    text.push(' ');
                }
                let start = text.chars().count();
                text.push_str(word);
                if let Some(c) = class {
                    let id = format!("T{}", mentions.len() + 1);
                    mentions.push(Mention::new(id, *c, vec![Span::new(start, start + word.chars().count())]));
                }
            }
            text.push_str(". ");
        }
        docs.push(Document::new(format!("doc{d}"), text.trim_end().to_string(), mentions));
    }
    docs
}
