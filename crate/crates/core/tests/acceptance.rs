//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srtag::augment::{augment_corpus, source_doc_id, IdentityTranslator};
use srtag::autograd::{Graph, ParamStore, Tensor};
use srtag::corpus::{split_sentences, tokenize, Document, EntityClass, Mention, Span};
use srtag::crf::{log_partition, negative_log_likelihood, path_score, viterbi_decode, CrfParamIds, CrfParams};
use srtag::encoding::{
    build_transition_constraints, encode_document, is_valid_iob2, EncodeOptions, Origin, TagSet, TaggedSentence,
    TokenFeatures,
};
use srtag::eval::{partial_match_f1, Denominator, MentionsByDoc};
use srtag::layers::{
    alternating_highway_lstm, char_cnn, count_parameters, CellIds, CharCnnIds, CharVocab, DropoutMode, DropoutSpec,
    Embeddings, JsonlContextual, Model, ModelConfig, WordTable,
};
use srtag::train::{
    ensemble_vote, evaluate_exact, prepare_documents, train_model, FoldPlan, LrHalving, Prepared, TrainConfig,
};

fn report(n: usize, name: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("PASS [{n:>2}] {name}: {detail}"),
        Err(detail) => {
            println!("FAIL [{n:>2}] {name}: {detail}");
            panic!("criterion {n} failed: {detail}");
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tensor(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

// ---------------------------------------------------------------- CRF oracles

fn all_paths(t: usize, k: usize) -> Vec<Vec<usize>> {
    (0..k.pow(t as u32))
        .map(|mut code| {
            (0..t)
                .map(|_| {
                    let y = code % k;
                    code /= k;
                    y
                })
                .collect()
        })
        .collect()
}

/// Path score from the definition: start + emissions + transitions + end.
fn oracle_score(p: &CrfParams, e: &Tensor, path: &[usize]) -> f64 {
    let mut s = p.start[path[0]] + p.end[path[path.len() - 1]];
    for (t, &y) in path.iter().enumerate() {
        s += e.get2(t, y);
        if t > 0 {
            s += p.transitions.get2(path[t - 1], y);
        }
    }
    s
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[test]
fn criterion_01_crf_partition_and_viterbi_oracle() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for inst in 0..200 {
            let t = rng.random_range(1..=6);
            let k = rng.random_range(1..=6);
            let p = CrfParams::random(k, 2.0, &mut rng);
            let e = random_tensor(&[t, k], 3.0, &mut rng);
            let paths = all_paths(t, k);
            let scores: Vec<f64> = paths.iter().map(|q| oracle_score(&p, &e, q)).collect();
            let z = log_partition(&p, &e).map_err(|x| x.to_string())?;
            let brute = logsumexp(&scores);
            check((z - brute).abs() < 1e-10, || format!("instance {inst}: logZ {z} vs {brute}"))?;
            let best = (0..paths.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
            let (path, score) = viterbi_decode(&p, &e, None).map_err(|x| x.to_string())?;
            check(path == paths[best], || format!("instance {inst}: viterbi {path:?} vs {:?}", paths[best]))?;
            check((score - scores[best]).abs() < 1e-10, || format!("instance {inst}: score"))?;
            check((path_score(&p, &e, &path).unwrap() - score).abs() < 1e-10, || "path_score".into())?;
        }
        let elapsed = started.elapsed();
        check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
        Ok(format!("200 instances, {elapsed:.2?}"))
    })();
    report(1, "CRF partition and Viterbi match enumeration", outcome);
}

// ------------------------------------------------------------ gradient checks

fn max_tensor_error(store: &mut ParamStore, analytic: &BTreeMap<usize, Tensor>, loss: &mut dyn FnMut(&ParamStore) -> f64) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let numeric = common::numeric_grad(store, id, 1e-5, loss);
        let zero = Tensor::zeros(store.get(id).shape());
        let a = analytic.get(&id.0).unwrap_or(&zero);
        let err = common::rel_error(a.data(), &numeric);
        if err > worst.0 {
            worst = (err, store.name(id).to_string());
        }
    }
    worst
}

fn cell_loss(store: &ParamStore, cell: &CellIds, xs: &[Tensor], weights: &[Tensor], grads: bool) -> (f64, BTreeMap<usize, Tensor>) {
    let mut g = Graph::new(store);
    let inputs: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let hs = cell.run(&mut g, &inputs, srtag::layers::Direction::LeftToRight, None).unwrap();
    let rows: Vec<Vec<f64>> = weights.iter().map(|w| w.data().to_vec()).collect();
    let r = g.constant(Tensor::from_rows(&rows).unwrap());
    let h = g.stack(&hs).unwrap();
    let m = g.mul(h, r).unwrap();
    let loss = g.sum(m).unwrap();
    let value = g.value(loss).item();
    let map = if grads {
        g.backward(loss).unwrap().into_params().into_iter().map(|(k, v)| (k.0, v)).collect()
    } else {
        BTreeMap::new()
    };
    (value, map)
}

fn cnn_loss(store: &ParamStore, cnn: &CharCnnIds, ids: &[usize], w: &Tensor, grads: bool) -> (f64, BTreeMap<usize, Tensor>) {
    let mut g = Graph::new(store);
    let feat = char_cnn(&mut g, cnn, ids).unwrap();
    let w = g.constant(w.clone());
    let m = g.mul(feat, w).unwrap();
    let loss = g.sum(m).unwrap();
    let value = g.value(loss).item();
    let map = if grads {
        g.backward(loss).unwrap().into_params().into_iter().map(|(k, v)| (k.0, v)).collect()
    } else {
        BTreeMap::new()
    };
    (value, map)
}

fn small_sentence(rng: &mut ChaCha8Rng, tag_set: &TagSet, t: usize) -> TaggedSentence {
    let words = ["rats", "got", "20", "mg", "Apigenin", "daily", "x"];
    let picked: Vec<&str> = (0..t).map(|_| words[rng.random_range(0..words.len())]).collect();
    let tags = (0..t).map(|_| rng.random_range(0..tag_set.len())).collect();
    common::sentence("g", &picked, tags)
}

#[test]
fn criterion_02_gradient_checks() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut worst: (f64, String) = (0.0, String::new());
        let mut note = |w: (f64, String), what: &str| {
            if w.0 >= worst.0 {
                worst = (w.0, format!("{what}: {}", w.1));
            }
        };

        // (a) highway LSTM cell, with and without the highway connection
        for trial in 0..6 {
            let hidden = rng.random_range(1..=8);
            let input = rng.random_range(1..=6);
            let t = rng.random_range(1..=5);
            let mut store = ParamStore::new();
            let cell = CellIds::register(&mut store, "cell", hidden, input, trial % 2 == 0, &mut rng);
            let xs: Vec<Tensor> = (0..t).map(|_| random_tensor(&[input], 1.0, &mut rng)).collect();
            let ws: Vec<Tensor> = (0..t).map(|_| random_tensor(&[hidden], 1.0, &mut rng)).collect();
            let (_, analytic) = cell_loss(&store, &cell, &xs, &ws, true);
            let w = max_tensor_error(&mut store, &analytic, &mut |s| cell_loss(s, &cell, &xs, &ws, false).0);
            note(w, "cell");
        }

        // (b) character CNN
        for _ in 0..6 {
            let (vocab, emb, filters) = (rng.random_range(3..8), rng.random_range(1..5), rng.random_range(1..6));
            let mut store = ParamStore::new();
            let cnn = CharCnnIds {
                embedding: store.add("emb", random_tensor(&[vocab, emb], 1.0, &mut rng)),
                weight: store.add("w", random_tensor(&[3 * emb, filters], 1.0, &mut rng)),
                bias: store.add("b", random_tensor(&[filters], 0.5, &mut rng)),
                kernel: 3,
            };
            let len = rng.random_range(1..7);
            let ids: Vec<usize> = (0..len).map(|_| rng.random_range(1..vocab)).collect();
            let w = random_tensor(&[filters], 1.0, &mut rng);
            let (_, analytic) = cnn_loss(&store, &cnn, &ids, &w, true);
            let e = max_tensor_error(&mut store, &analytic, &mut |s| cnn_loss(s, &cnn, &ids, &w, false).0);
            note(e, "char-cnn");
        }

        // (c) full model negative log-likelihood
        let tag_set = TagSet::new(vec![EntityClass::Dose, EntityClass::Species]);
        for trial in 0..3 {
            let mut config = ModelConfig::tiny();
            config.hidden = rng.random_range(2..=8);
            config.embedding.char_out_dim = 4;
            config.embedding.char_emb_dim = 3;
            config.embedding.word_dim = 2;
            config.highway = trial != 1;
            let t = rng.random_range(1..=5);
            let s = small_sentence(&mut rng, &tag_set, t);
            let mut model = Model::new(config, tag_set.clone(), CharVocab::from_sentences(&[s.clone()]), trial);
            let crf = model.ids.crf;
            let random_crf = CrfParams::random(tag_set.len(), 1.0, &mut rng);
            *model.store.get_mut(crf.transitions) = random_crf.transitions;
            *model.store.get_mut(crf.start) = Tensor::vector(random_crf.start);
            *model.store.get_mut(crf.end) = Tensor::vector(random_crf.end);
            let mut words = WordTable::empty(2);
            words.insert("rats", vec![0.3, -0.2]).unwrap();
            let emb = Embeddings {
                words,
                contextual: Box::new(srtag::layers::ZeroContextual { dim: 0 }),
            };
            let nll = |store: &ParamStore, grads: bool| {
                let mut g = Graph::new(store);
                let loss = model.loss(&mut g, &s, &emb, None).unwrap();
                let value = g.value(loss).item();
                let map: BTreeMap<usize, Tensor> = if grads {
                    g.backward(loss).unwrap().into_params().into_iter().map(|(k, v)| (k.0, v)).collect()
                } else {
                    BTreeMap::new()
                };
                (value, map)
            };
            let (_, analytic) = nll(&model.store, true);
            let mut store = model.store.clone();
            let e = max_tensor_error(&mut store, &analytic, &mut |st| nll(st, false).0);
            note(e, "model");
        }

        let elapsed = started.elapsed();
        check(worst.0 < 1e-4, || format!("relative error {:.2e} ({})", worst.0, worst.1))?;
        check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
        Ok(format!("max relative error {:.2e}, {elapsed:.2?}", worst.0))
    })();
    report(2, "analytic gradients match central differences", outcome);
}

// ------------------------------------------------------ CRF gradient identity

#[test]
fn criterion_03_crf_gradient_identity() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let t = rng.random_range(1..=5);
            let k = rng.random_range(2..=5);
            let p = CrfParams::random(k, 1.5, &mut rng);
            let e = random_tensor(&[t, k], 2.0, &mut rng);
            let gold: Vec<usize> = (0..t).map(|_| rng.random_range(0..k)).collect();

            // marginals by enumeration
            let paths = all_paths(t, k);
            let scores: Vec<f64> = paths.iter().map(|q| oracle_score(&p, &e, q)).collect();
            let z = logsumexp(&scores);
            let mut marg = vec![vec![0.0; k]; t];
            for (q, s) in paths.iter().zip(&scores) {
                let w = (s - z).exp();
                for (pos, &y) in q.iter().enumerate() {
                    marg[pos][y] += w;
                }
            }

            let mut store = ParamStore::new();
            let ids = CrfParamIds::register(&mut store, "crf", p.clone());
            let mut g = Graph::new(&store);
            let ev = g.input(e.clone());
            let nll = negative_log_likelihood(&mut g, &ids, ev, &gold).map_err(|x| x.to_string())?;
            let grad = g.backward(nll).map_err(|x| x.to_string())?.wrt(ev);
            for pos in 0..t {
                for y in 0..k {
                    let onehot = if gold[pos] == y { 1.0 } else { 0.0 };
                    worst = worst.max((grad.get2(pos, y) - (marg[pos][y] - onehot)).abs());
                }
            }
        }
        check(worst < 1e-8, || format!("max deviation {worst:.2e}"))?;
        Ok(format!("50 instances, max deviation {worst:.2e}"))
    })();
    report(3, "d(-LL)/d(emissions) = marginals - one-hot", outcome);
}

// ----------------------------------------------------------- parameter count

#[test]
fn criterion_04_parameter_count() {
    let outcome = (|| {
        let config = ModelConfig::standard();
        let chars: String = (0..80u8).map(|i| (b'!' + i) as char).collect();
        let vocab = CharVocab::build([chars.as_str()]);
        check(vocab.len() >= 80, || "vocabulary too small".into())?;
        check(config.input_dim() == 1453, || format!("input dim {}", config.input_dim()))?;
        let tags = TagSet::full();
        let closed = count_parameters(&config, vocab.len(), tags.len());
        check(closed >= 31_300_000, || format!("closed form {closed}"))?;
        let model = Model::new(config, tags, vocab, 0);
        let enumerated: usize = model.store.entries().iter().map(|e| e.value.len()).sum();
        check(closed == enumerated, || format!("closed form {closed} vs enumerated {enumerated}"))?;
        Ok(format!("{closed} trainable scalars"))
    })();
    report(4, "standard configuration has 31.3M+ parameters", outcome);
}

// ------------------------------------------------------------------ tag space

#[test]
fn criterion_05_tag_space() {
    let outcome = (|| {
        let t = TagSet::full();
        check(t.classes().len() == 24 && t.len() == 49, || format!("{} classes, {} tags", t.classes().len(), t.len()))?;
        let n = t.len();
        let (start, end) = (t.start_state(), t.end_state());
        let mut legal: BTreeSet<(usize, usize)> = BTreeSet::new();
        for len in 1..=3u32 {
            for code in 0..n.pow(len) {
                let mut c = code;
                let seq: Vec<usize> = (0..len)
                    .map(|_| {
                        let y = c % n;
                        c /= n;
                        y
                    })
                    .collect();
                if !is_valid_iob2(&seq, &t) {
                    continue;
                }
                let mut path = vec![start];
                path.extend(&seq);
                path.push(end);
                legal.extend(path.windows(2).map(|w| (w[0], w[1])));
            }
        }
        let m = build_transition_constraints(&t);
        let mut allowed = 0;
        for from in 0..n + 2 {
            for to in 0..n + 2 {
                check(m.allowed(from, to) == legal.contains(&(from, to)), || format!("bigram {from}->{to}"))?;
                allowed += usize::from(m.allowed(from, to));
            }
        }
        Ok(format!("49 tags, {allowed} allowed transitions"))
    })();
    report(5, "24 classes give 49 tags and the IOB2 transition set", outcome);
}

// -------------------------------------------------------- nested encoding

const PROSTATE_TEXT: &str = "The difference between data, including GU weight, ventral lobe prostate, \
dorsolateral lobe prostate between 3 treatment groups (control, 20 and 50 µg apigenin) was examined \
using the analysis of the variance followed by Turkey multiple comparison procedure.";

fn find(text: &str, needle: &str) -> Span {
    let chars: Vec<char> = text.chars().collect();
    let pat: Vec<char> = needle.chars().collect();
    let start = (0..=chars.len() - pat.len()).find(|&i| chars[i..i + pat.len()] == pat[..]).unwrap();
    Span::new(start, start + pat.len())
}

fn prostate_document() -> Document {
    use EntityClass::*;
    let spec = [
        (Endpoint, "data"),
        (Endpoint, "GU weight"),
        (Endpoint, "ventral lobe prostate"),
        (Endpoint, "dorsolateral lobe prostate"),
        (GroupName, "treatment groups"),
        (GroupName, "control"),
        (GroupName, "20"),
        (GroupName, "50 µg apigenin"),
        (Dose, "20"),
        (Dose, "50"),
        (DoseUnits, "µg"),
        (TestArticle, "apigenin"),
    ];
    let mentions = spec
        .iter()
        .enumerate()
        .map(|(i, &(c, s))| Mention::new(format!("T{}", i + 1), c, vec![find(PROSTATE_TEXT, s)]))
        .collect();
    Document::new("prostate", PROSTATE_TEXT, mentions)
}

#[test]
fn criterion_06_nested_group_encoding() {
    let outcome = (|| {
        let doc = prostate_document();
        let tok = tokenize(&doc, &split_sentences(&doc)).map_err(|e| e.to_string())?;
        let tag_set = TagSet::full();
        let feats = vec![TokenFeatures::default(); tok.tokens.len()];
        let sents = encode_document(&tok, &tag_set, &EncodeOptions::default(), &feats, false).map_err(|e| e.to_string())?;
        check(sents.len() == 2, || format!("{} sentence copies", sents.len()))?;
        let words: Vec<&str> = tok.tokens.iter().map(|t| t.text.as_str()).collect();
        let shared = [
            ("data", "B-Endpoint"),
            ("GU", "B-Endpoint"),
            ("weight", "I-Endpoint"),
            ("ventral", "B-Endpoint"),
            ("lobe", "I-Endpoint"),
            ("prostate", "I-Endpoint"),
            ("dorsolateral", "B-Endpoint"),
            ("lobe", "I-Endpoint"),
            ("prostate", "I-Endpoint"),
            ("treatment", "B-GroupName"),
            ("groups", "I-GroupName"),
            ("control", "B-GroupName"),
        ];
        let first: Vec<_> = shared
            .iter()
            .copied()
            .chain([("20", "B-GroupName"), ("50", "B-GroupName"), ("µg", "I-GroupName"), ("apigenin", "I-GroupName")])
            .collect();
        let second: Vec<_> = shared
            .iter()
            .copied()
            .chain([("20", "B-Dose"), ("50", "B-Dose"), ("µg", "B-DoseUnits"), ("apigenin", "B-TestArticle")])
            .collect();
        let expand = |tags: &[(&str, &str)]| -> Vec<String> {
            let mut k = 0;
            words
                .iter()
                .map(|w| {
                    if k < tags.len() && tags[k].0 == *w {
                        k += 1;
                        tags[k - 1].1.to_string()
                    } else {
                        "O".to_string()
                    }
                })
                .collect()
        };
        for (copy, expected) in sents.iter().zip([expand(&first), expand(&second)]) {
            let got: Vec<String> = copy.tags.iter().map(|&t| tag_set.name(t)).collect();
            check(got == expected, || format!("level {}: {got:?}", copy.level))?;
        }
        check(sents[0].origin == Origin::Original && sents[1].origin == Origin::OverlapLevel, || "origins".into())?;
        Ok(format!("{} tokens, 2 levels", words.len()))
    })();
    report(6, "nested group sentence encodes to two tag rows", outcome);
}

// ------------------------------------------------------------- overfit sanity

#[test]
fn criterion_07_overfit_synthetic_corpus() {
    let started = Instant::now();
    let outcome = (|| {
        let docs = common::synthetic_corpus(7);
        let prepared =
            prepare_documents(&docs, &TagSet::full(), &EncodeOptions::default(), None).map_err(|e| e.to_string())?;
        let sentences: Vec<TaggedSentence> = prepared.iter().flat_map(|p| p.sentences.clone()).collect();
        check(sentences.len() == 50, || format!("{} sentences", sentences.len()))?;
        let config = ModelConfig::tiny();
        let model = Model::new(config.clone(), TagSet::full(), CharVocab::from_sentences(&sentences), 7);
        let train = TrainConfig {
            lr0: 0.01,
            batch_size: 5,
            lr_halving: LrHalving {
                min_delta: 0.001,
                patience: 5,
            },
            early_stop_patience: 10,
            max_epochs: 200,
            seed: 7,
            ..TrainConfig::default()
        };
        let emb = Embeddings::zero(&config);
        let mut reached = None;
        let out = train_model(model, &sentences, &sentences, &emb, &train, &mut |l| {
            if reached.is_none() && l.val_f1 == Some(1.0) {
                reached = Some(l.epoch);
            }
        })
        .map_err(|e| e.to_string())?;
        let f1 = evaluate_exact(&out.model, &sentences, &emb).map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        check(f1 == 1.0, || format!("best F1 {f1} after {} epochs", out.log.len()))?;
        check(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
        Ok(format!("F1 = 1.0 first at epoch {}, {elapsed:.2?}", reached.unwrap_or(0)))
    })();
    report(7, "tiny model overfits 50 synthetic sentences", outcome);
}

// ------------------------------------------------------------------- scorer

fn chars_of(m: &Mention) -> BTreeSet<usize> {
    m.spans.iter().flat_map(|s| s.start..s.end).collect()
}

/// Largest number of disjoint pairs, by trying every assignment.
fn brute_matching(gold: &[&Mention], pred: &[&Mention], threshold: f64) -> usize {
    fn go(i: usize, gold: &[&Mention], pred: &[&Mention], used: &mut Vec<bool>, threshold: f64) -> usize {
        if i == gold.len() {
            return 0;
        }
        let mut best = go(i + 1, gold, pred, used, threshold);
        let g = chars_of(gold[i]);
        for j in 0..pred.len() {
            if used[j] {
                continue;
            }
            let shared = g.intersection(&chars_of(pred[j])).count();
            if shared as f64 / g.len() as f64 >= threshold {
                used[j] = true;
                best = best.max(1 + go(i + 1, gold, pred, used, threshold));
                used[j] = false;
            }
        }
        best
    }
    go(0, gold, pred, &mut vec![false; pred.len()], threshold)
}

fn random_mentions(rng: &mut ChaCha8Rng, n: usize) -> Vec<Mention> {
    let classes = [EntityClass::Dose, EntityClass::Sex, EntityClass::Species];
    (0..n)
        .map(|i| {
            let start = rng.random_range(0..30);
            let mut spans = vec![Span::new(start, start + rng.random_range(1..8))];
            if rng.random_bool(0.2) {
                let s2 = spans[0].end + rng.random_range(1..4);
                spans.push(Span::new(s2, s2 + rng.random_range(1..4)));
            }
            Mention::new(format!("T{i}"), classes[rng.random_range(0..classes.len())], spans)
        })
        .collect()
}

#[test]
fn criterion_08_partial_match_scorer() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let mut gold = MentionsByDoc::new();
        let mut pred = MentionsByDoc::new();
        for d in 0..100 {
            let (ng, np) = (rng.random_range(0..6), rng.random_range(0..6));
            gold.insert(format!("d{d}"), random_mentions(&mut rng, ng));
            pred.insert(format!("d{d}"), random_mentions(&mut rng, np));
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (doc, gs) in &gold {
            let ps = &pred[doc];
            let classes: BTreeSet<EntityClass> = gs.iter().chain(ps).map(|m| m.class).collect();
            for c in classes {
                let g: Vec<&Mention> = gs.iter().filter(|m| m.class == c).collect();
                let p: Vec<&Mention> = ps.iter().filter(|m| m.class == c).collect();
                let matched = brute_matching(&g, &p, 0.5);
                tp += matched;
                fp += p.len() - matched;
                fn_ += g.len() - matched;
            }
        }
        let r = partial_match_f1(&gold, &pred, 0.5, Denominator::Gold).map_err(|e| e.to_string())?;
        check((r.micro.tp, r.micro.fp, r.micro.fn_) == (tp, fp, fn_), || {
            format!("scorer {:?} vs oracle {:?}", (r.micro.tp, r.micro.fp, r.micro.fn_), (tp, fp, fn_))
        })?;

        // exactly half the gold characters covered counts as a match
        let g = BTreeMap::from([("d".to_string(), vec![Mention::new("G", EntityClass::Dose, vec![Span::new(0, 10)])])]);
        let p = BTreeMap::from([("d".to_string(), vec![Mention::new("P", EntityClass::Dose, vec![Span::new(5, 12)])])]);
        let half = partial_match_f1(&g, &p, 0.5, Denominator::Gold).map_err(|e| e.to_string())?;
        check(half.micro.tp == 1, || "overlap of exactly 0.5 not matched".into())?;

        let loose = partial_match_f1(&gold, &pred, 0.4, Denominator::Gold).map_err(|e| e.to_string())?;
        check(loose.micro.tp >= r.micro.tp, || format!("tp {} at 0.4 < {} at 0.5", loose.micro.tp, r.micro.tp))?;
        for (c, counts) in &r.per_class {
            check(loose.per_class[c].tp >= counts.tp, || format!("{c} not monotone"))?;
        }
        Ok(format!("tp/fp/fn = {tp}/{fp}/{fn_} at 0.5, tp = {} at 0.4", loose.micro.tp))
    })();
    report(8, "partial matching equals brute-force assignment", outcome);
}

// --------------------------------------------------------------- augmentation

fn labels(doc: &Document) -> Vec<(EntityClass, String)> {
    let mut v: Vec<_> = doc
        .mentions
        .iter()
        .map(|m| (m.class, m.spans.iter().map(|s| doc.slice(*s)).collect::<Vec<_>>().join("|")))
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_09_augmentation_totality_and_exclusion() {
    let outcome = (|| {
        let mut docs = common::synthetic_corpus(9);
        docs.push(prostate_document());
        let pivots = ["fr".to_string(), "ru".to_string()];
        let (aug, fallbacks) = augment_corpus(&docs, &IdentityTranslator, &pivots);
        check(aug.len() == 3 * docs.len(), || format!("{} documents from {}", aug.len(), docs.len()))?;
        check(fallbacks == 0, || format!("{fallbacks} fallbacks"))?;
        for d in &aug {
            let src = docs.iter().find(|s| s.doc_id == source_doc_id(&d.doc_id)).ok_or("orphan copy")?;
            check(labels(d) == labels(src) && d.mentions == src.mentions, || format!("{} labels changed", d.doc_id))?;
        }
        let prepared: Vec<Prepared> =
            prepare_documents(&aug, &TagSet::full(), &EncodeOptions::default(), None).map_err(|e| e.to_string())?;
        let sentences: Vec<TaggedSentence> = prepared.iter().flat_map(|p| p.sentences.clone()).collect();
        let kinds: BTreeSet<String> = sentences.iter().map(|s| format!("{:?}", s.origin)).collect();
        check(kinds.len() == 3, || format!("origins present: {kinds:?}"))?;
        let ids: Vec<String> = sentences.iter().map(|s| s.doc_id.clone()).collect();
        let plan = FoldPlan::build(&ids, 5, 9, true, true).map_err(|e| e.to_string())?;
        let mut validated = 0;
        for f in 0..plan.folds.len() {
            let (_, val) = plan.split(f, &sentences);
            validated += val.len();
            check(val.iter().all(|s| s.origin == Origin::Original && s.level == 1), || format!("fold {f} leaks"))?;
        }
        let originals = sentences.iter().filter(|s| s.origin == Origin::Original).count();
        check(validated == originals, || format!("{validated} validated vs {originals} originals"))?;
        Ok(format!("{} -> {} documents, {validated} validation sentences", docs.len(), aug.len()))
    })();
    report(9, "identity augmentation triples data and never validates", outcome);
}

// ------------------------------------------------------------------- ensemble

#[test]
fn criterion_10_ensemble_semantics() {
    let outcome = (|| {
        let ts = TagSet::full();
        let ids = |row: &[&str]| -> Vec<usize> { row.iter().map(|n| ts.id_of(n).unwrap()).collect() };
        let models = [
            ids(&["B-Species", "O", "B-Dose", "I-Dose", "O", "B-Sex"]),
            ids(&["B-Species", "B-Dose", "I-Dose", "I-Dose", "O", "B-Strain"]),
            ids(&["O", "O", "B-Sex", "O", "I-Dose", "B-Dose"]),
        ];
        // per token: plurality, else the alphabetically first tag, then repair
        let expected = ["B-Species", "O", "B-Dose", "I-Dose", "O", "B-Dose"];
        let got: Vec<String> = ensemble_vote(&models, &ts).map_err(|e| e.to_string())?.iter().map(|&t| ts.name(t)).collect();
        check(got == expected, || format!("vote {got:?}"))?;
        let orphan = [ids(&["O", "I-Dose"]), ids(&["O", "I-Dose"]), ids(&["B-Sex", "O"])];
        let got: Vec<String> = ensemble_vote(&orphan, &ts).map_err(|e| e.to_string())?.iter().map(|&t| ts.name(t)).collect();
        check(got == ["O", "B-Dose"], || format!("repair {got:?}"))?;
        let single = ids(&["O", "B-Sex", "I-Sex"]);
        check(ensemble_vote(&[single.clone()], &ts).unwrap() == single, || "k = 1".into())?;

        let mut rng = ChaCha8Rng::seed_from_u64(1010);
        for _ in 0..1000 {
            let len = rng.random_range(1..10);
            let k = rng.random_range(1..6);
            let p: Vec<Vec<usize>> = (0..k).map(|_| (0..len).map(|_| rng.random_range(0..ts.len())).collect()).collect();
            let v = ensemble_vote(&p, &ts).map_err(|e| e.to_string())?;
            check(is_valid_iob2(&v, &ts), || format!("invalid output for {p:?}"))?;
        }
        Ok("3-model fixture matches, 1000 random votes valid".into())
    })();
    report(10, "majority vote with lexicographic tie-break and repair", outcome);
}

// -------------------------------------------------------------------- dropout

fn dropout_config(p: f64) -> ModelConfig {
    let mut c = ModelConfig::tiny();
    c.num_layers = 1;
    c.hidden = 12;
    c.dropout_mode = DropoutMode::Full;
    c.dropout = DropoutSpec { d1: 0.0, d2: p, d3: 0.0 };
    c
}

/// Zero pattern of every `h_t` for one train-mode pass.
fn zero_patterns(store: &ParamStore, cell: &CellIds, xs: &[Tensor], config: &ModelConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    let mut g = Graph::new(store);
    let inputs: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let hs = alternating_highway_lstm(&mut g, std::slice::from_ref(cell), &inputs, config, Some(rng)).unwrap();
    hs.iter().map(|h| g.value(*h).data().iter().map(|v| *v == 0.0).collect()).collect()
}

#[test]
fn criterion_11_dropout_contracts() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(1111);
        let config = dropout_config(0.5);
        let mut store = ParamStore::new();
        let cell = CellIds::register(&mut store, "l", 12, 5, true, &mut rng);
        let xs: Vec<Tensor> = (0..7).map(|_| random_tensor(&[5], 1.0, &mut rng)).collect();

        // constancy within a sequence, variation across sequences
        let mut distinct = BTreeSet::new();
        let mut dropped = 0usize;
        for draw in 0..100 {
            let pats = zero_patterns(&store, &cell, &xs, &config, &mut rng);
            check(pats.iter().all(|p| *p == pats[0]), || format!("draw {draw}: mask changes over time"))?;
            dropped += pats[0].iter().filter(|z| **z).count();
            distinct.insert(pats[0].clone());
        }
        let rate = dropped as f64 / 1200.0;
        check(distinct.len() > 50, || format!("only {} distinct masks in 100 draws", distinct.len()))?;
        check((rate - 0.5).abs() < 0.07, || format!("drop rate {rate}"))?;

        // train/eval divergence and eval determinism
        let docs = common::synthetic_corpus(11);
        let prepared = prepare_documents(&docs[..2], &TagSet::full(), &EncodeOptions::default(), None).map_err(|e| e.to_string())?;
        let s = prepared[0].sentences[0].clone();
        let mut full = ModelConfig::tiny();
        full.dropout = DropoutSpec::standard();
        let model = Model::new(full.clone(), TagSet::full(), CharVocab::from_sentences(&[s.clone()]), 3);
        let emb = Embeddings::zero(&full);
        let eval_a = model.score(&s, &emb).map_err(|e| e.to_string())?;
        let eval_b = model.score(&s, &emb).map_err(|e| e.to_string())?;
        check(eval_a == eval_b, || "eval mode is not deterministic".into())?;
        let mut g = Graph::new(&model.store);
        let e = model.emissions(&mut g, &s, &emb, Some(&mut rng)).map_err(|e| e.to_string())?;
        check(*g.value(e) != eval_a, || "train output equals eval output".into())?;

        // frozen word and contextual vectors: no gradient slot, unchanged by training
        let mut cfg = ModelConfig::tiny();
        cfg.embedding.word_dim = 3;
        cfg.embedding.contextual_dim = 2;
        let sentences: Vec<TaggedSentence> = prepared.iter().flat_map(|p| p.sentences.clone()).collect();
        let mut words = WordTable::empty(3);
        for (i, t) in sentences.iter().flat_map(|s| &s.tokens).enumerate() {
            if words.get(&t.text).is_none() {
                words.insert(t.text.clone(), vec![0.01 * i as f64, -0.5, 1.5]).unwrap();
            }
        }
        let ctx_lines: String = sentences
            .iter()
            .flat_map(|s| {
                s.tokens.iter().enumerate().map(move |(i, t)| {
                    serde_json::json!({
                        "doc_id": s.doc_id, "sentence_index": s.sentence_index, "token_index": i,
                        "token": t.text, "layers": [[0.1, 0.2], [0.3, -0.4], [0.0, 1.0]]
                    })
                    .to_string()
                })
            })
            .collect::<Vec<_>>()
            .join("\n");
        let ctx = JsonlContextual::read(ctx_lines.as_bytes(), 2, true, "ctx").map_err(|e| e.to_string())?;
        let words_before = words.clone();
        let emb = Embeddings {
            words,
            contextual: Box::new(ctx),
        };
        let s0 = &sentences[0];
        let key = srtag::layers::ContextKey {
            doc_id: &s0.doc_id,
            sentence_index: s0.sentence_index,
            token_index: 0,
            token: &s0.tokens[0].text,
        };
        let ctx_before = emb.contextual.layers(&key);
        let model = Model::new(cfg, TagSet::full(), CharVocab::from_sentences(&sentences), 4);
        let mut g = Graph::new(&model.store);
        let loss = model.loss(&mut g, &sentences[0], &emb, Some(&mut rng)).map_err(|e| e.to_string())?;
        let grads = g.backward(loss).map_err(|e| e.to_string())?;
        let names: Vec<&str> = model.store.entries().iter().map(|e| e.name.as_str()).collect();
        check(!names.iter().any(|n| n.starts_with("word") || n.starts_with("context")), || format!("frozen vectors in store: {names:?}"))?;
        check(
            model.store.num_scalars() == count_parameters(&model.config, model.char_vocab.len(), model.tag_set.len()),
            || "store holds more than the trainable parameters".into(),
        )?;
        check(grads.into_params().len() <= model.store.len(), || "gradient outside the store".into())?;
        let step = TrainConfig {
            fixed_epochs: Some(1),
            batch_size: 4,
            ..TrainConfig::default()
        };
        let trained = train_model(model.clone(), &sentences, &[], &emb, &step, &mut |_| {}).map_err(|e| e.to_string())?;
        check(trained.model.store != model.store, || "training step changed nothing".into())?;
        for (w, v) in sentences.iter().flat_map(|s| &s.tokens).map(|t| (&t.text, words_before.get(&t.text))) {
            let same = emb.words.get(w).zip(v).is_some_and(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            check(same, || format!("word vector for {w} changed"))?;
        }
        check(emb.contextual.layers(&key) == ctx_before, || "contextual vectors changed".into())?;

        Ok(format!("{} distinct masks, drop rate {rate:.3}", distinct.len()))
    })();
    report(11, "variational masks, train/eval divergence, frozen embeddings", outcome);
}

