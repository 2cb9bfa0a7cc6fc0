use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use srtag::augment::{augment_corpus, FixtureTranslator, HttpTranslator, IdentityTranslator, TitleFetcher, Translator};
use srtag::corpus::{load_corpus, write_corpus, Corpus, Document, OffsetPolicy};
use srtag::encoding::{read_jsonl, write_jsonl, Origin, TagSet, TaggedSentence};
use srtag::eval::{exact_match_f1, partial_match_f1, per_class_table, Denominator, MentionsByDoc, ScoreReport};
use srtag::layers::{CharVocab, Embeddings, JsonlContextual, Model, ModelConfig, WordTable, ZeroContextual};
use srtag::train::{
    cross_validate, gold_mentions, load_checkpoint, predict_document, prepare_documents, save_checkpoint, train_model,
    EpochLog, Prepared,
};

use crate::config::RunConfig;
use crate::{CliError, Result};

pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const TAGS_FILE: &str = "tags.txt";
pub const GOLD_FILE: &str = "gold.json";
pub const MODEL_FILE: &str = "model.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";

fn run_err(context: impl std::fmt::Display) -> impl FnOnce(String) -> CliError {
    move |e| CliError::Run(format!("{context}: {e}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| run_err(dir.display())(e.to_string()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| run_err(path.display())(e.to_string()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| run_err(path.display())(e.to_string()))?;
    write_file(path, json + "\n")
}

/// A flag, else the configured path, else an error naming both.
pub fn require(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Config(format!("no {what} given (flag or config paths)")))
}

fn load(dir: &Path, policy: OffsetPolicy) -> Result<Corpus> {
    load_corpus(dir, policy).map_err(|e| run_err(dir.display())(e.to_string()))
}

fn embeddings(model: &ModelConfig, config: &RunConfig) -> Result<Embeddings> {
    let dim = model.embedding.word_dim;
    let words = match &config.paths.vectors {
        Some(p) => WordTable::load(p, dim).map_err(|e| run_err(p.display())(e.to_string()))?,
        None => WordTable::empty(dim),
    };
    let dim = model.embedding.contextual_dim;
    let contextual: Box<dyn srtag::layers::ContextualProvider + Send + Sync> = match &config.paths.contextual {
        // translated copies never have precomputed vectors, so gaps are zeros
        Some(p) => Box::new(JsonlContextual::load(p, dim, false).map_err(|e| run_err(p.display())(e.to_string()))?),
        None => Box::new(ZeroContextual { dim }),
    };
    Ok(Embeddings { words, contextual })
}

/// Title fetcher for the in-title feature, or `None` when it is off.
fn titles(model: &ModelConfig, config: &RunConfig, docs: &[Document]) -> Result<Option<TitleFetcher>> {
    if !model.use_in_title {
        return Ok(None);
    }
    let url = config.paths.title_url.clone().unwrap_or_default();
    let mut fetcher =
        TitleFetcher::new(url, config.paths.titles.clone()).map_err(|e| CliError::Run(e.to_string()))?;
    for d in docs {
        fetcher.fetch(srtag::augment::source_doc_id(&d.doc_id));
    }
    Ok(Some(fetcher))
}

fn prepare(docs: &[Document], tag_set: &TagSet, model: &ModelConfig, config: &RunConfig) -> Result<Vec<Prepared>> {
    let fetcher = titles(model, config, docs)?;
    let options = config.encode_options(model);
    let result = match &fetcher {
        Some(f) => {
            let lookup = |id: &str| f.cached(id);
            prepare_documents(docs, tag_set, &options, Some(&lookup))
        }
        None => prepare_documents(docs, tag_set, &options, None),
    };
    result.map_err(|e| CliError::Run(e.to_string()))
}

fn admitted(s: &TaggedSentence, model: &ModelConfig) -> bool {
    match s.origin {
        Origin::Original => true,
        Origin::OverlapLevel => model.use_overlap_levels,
        Origin::Translation => model.use_translations,
    }
}

fn log_epoch(prefix: &str, l: &EpochLog) {
    match l.val_f1 {
        Some(f1) => log::info!("{prefix}epoch {} lr {:.2e} loss {:.4} val F1 {:.4}", l.epoch, l.lr, l.train_loss, f1),
        None => log::info!("{prefix}epoch {} lr {:.2e} loss {:.4}", l.epoch, l.lr, l.train_loss),
    }
}

pub fn preprocess(config: &RunConfig, corpus: PathBuf, out: PathBuf, policy: OffsetPolicy) -> Result<()> {
    let model = config.model_config().map_err(CliError::Config)?;
    let docs = load(&corpus, policy)?.documents;
    let tag_set = TagSet::full();
    let prepared = prepare(&docs, &tag_set, &model, config)?;
    create_dir(&out)?;
    let sentences: Vec<&TaggedSentence> = prepared.iter().flat_map(|p| &p.sentences).collect();
    let path = out.join(SENTENCES_FILE);
    let file = fs::File::create(&path).map_err(|e| run_err(path.display())(e.to_string()))?;
    write_jsonl(&sentences, BufWriter::new(file)).map_err(|e| run_err(path.display())(e.to_string()))?;
    write_file(&out.join(TAGS_FILE), tag_set.vocabulary_file())?;
    write_json(&out.join(GOLD_FILE), &gold_mentions(&prepared))?;
    log::info!("{} documents, {} sentence copies -> {}", docs.len(), sentences.len(), out.display());
    Ok(())
}

pub enum TranslatorKind {
    Identity,
    Fixture(PathBuf),
    Http,
}

pub fn augment(config: &RunConfig, corpus: PathBuf, out: PathBuf, pivots: &[String], kind: TranslatorKind) -> Result<()> {
    let docs = load(&corpus, config.offset_policy)?.documents;
    let translator: Box<dyn Translator> = match kind {
        TranslatorKind::Identity => Box::new(IdentityTranslator),
        TranslatorKind::Fixture(p) => {
            Box::new(FixtureTranslator::load(&p).map_err(|e| run_err(p.display())(e.to_string()))?)
        }
        TranslatorKind::Http => Box::new(HttpTranslator::from_env().ok_or_else(|| {
            CliError::Config(format!("set {} to use the HTTP translator", HttpTranslator::URL_VAR))
        })?),
    };
    let (documents, fallbacks) = augment_corpus(&docs, translator.as_ref(), pivots);
    if fallbacks > 0 {
        log::warn!("{fallbacks} translations fell back to the original text");
    }
    write_corpus(&Corpus { documents }, &out).map_err(|e| run_err(out.display())(e.to_string()))?;
    log::info!("{} documents with pivots {:?} -> {}", docs.len(), pivots, out.display());
    Ok(())
}

/// Sentences and tag set from a corpus directory or an encoded JSON-lines
/// file (with `tags.txt` beside it, if present).
fn sentences_from(input: &Path, model: &ModelConfig, config: &RunConfig) -> Result<(Vec<TaggedSentence>, TagSet)> {
    if input.is_dir() {
        let tag_set = TagSet::full();
        let docs = load(input, config.offset_policy)?.documents;
        let prepared = prepare(&docs, &tag_set, model, config)?;
        return Ok((prepared.into_iter().flat_map(|p| p.sentences).collect(), tag_set));
    }
    let file = fs::File::open(input).map_err(|e| run_err(input.display())(e.to_string()))?;
    let sentences = read_jsonl(std::io::BufReader::new(file)).map_err(|e| run_err(input.display())(e.to_string()))?;
    let tags_path = input.with_file_name(TAGS_FILE);
    let tag_set = if tags_path.exists() {
        let raw = fs::read_to_string(&tags_path).map_err(|e| run_err(tags_path.display())(e.to_string()))?;
        TagSet::from_vocabulary_file(&raw).map_err(|e| run_err(tags_path.display())(e.to_string()))?
    } else {
        TagSet::full()
    };
    Ok((sentences, tag_set))
}

pub fn train(config: &RunConfig, input: PathBuf, validation: Option<PathBuf>, out: PathBuf) -> Result<()> {
    let model_config = config.model_config().map_err(CliError::Config)?;
    let (sentences, tag_set) = sentences_from(&input, &model_config, config)?;
    let train_set: Vec<TaggedSentence> = sentences.into_iter().filter(|s| admitted(s, &model_config)).collect();
    let validation_set: Vec<TaggedSentence> = match validation {
        Some(p) => sentences_from(&p, &model_config, config)?
            .0
            .into_iter()
            .filter(|s| s.origin == Origin::Original && s.level == 1)
            .collect(),
        None => Vec::new(),
    };
    let emb = embeddings(&model_config, config)?;
    let vocab = CharVocab::from_sentences(&train_set);
    let model = Model::new(model_config, tag_set, vocab, config.train.seed);
    log::info!("{} parameters, {} training sentences", model.num_parameters(), train_set.len());
    let mut log = Vec::new();
    let outcome = train_model(model, &train_set, &validation_set, &emb, &config.train, &mut |l| {
        log_epoch("", l);
        log.push(l.clone());
    })
    .map_err(|e| CliError::Run(e.to_string()))?;
    create_dir(&out)?;
    let model_path = out.join(MODEL_FILE);
    save_checkpoint(&outcome.model, &model_path).map_err(|e| CliError::Run(e.to_string()))?;
    let mut lines = Vec::new();
    write_jsonl(&log, &mut lines).map_err(|e| CliError::Run(e.to_string()))?;
    write_file(&out.join(LOG_FILE), lines)?;
    log::info!("best epoch {} -> {}", outcome.best_epoch, model_path.display());
    Ok(())
}

/// Documents carrying the given mentions in place of their annotations.
fn with_mentions(docs: &[Document], mentions: &MentionsByDoc) -> Corpus {
    let documents = docs
        .iter()
        .filter_map(|d| {
            mentions.get(&d.doc_id).map(|m| Document {
                mentions: m.clone(),
                ..d.clone()
            })
        })
        .collect();
    Corpus { documents }
}

fn write_report(out: &Path, report: &ScoreReport) -> Result<String> {
    let table = per_class_table(report);
    write_json(&out.join(REPORT_FILE), report)?;
    write_file(&out.join(TABLE_FILE), &table)?;
    Ok(table)
}

pub fn cv(config: &RunConfig, corpus: PathBuf, out: PathBuf, folds: Option<usize>, jobs: usize) -> Result<()> {
    let model_config = config.model_config().map_err(CliError::Config)?;
    let mut train_config = config.train.clone();
    if let Some(k) = folds {
        train_config.folds = k;
    }
    train_config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if jobs > 1 {
        log::warn!("folds run one after another; --jobs {jobs} is ignored");
    }
    let docs = load(&corpus, config.offset_policy)?.documents;
    let tag_set = TagSet::full();
    let prepared = prepare(&docs, &tag_set, &model_config, config)?;
    let gold = gold_mentions(&prepared);
    let sentences: Vec<TaggedSentence> = prepared.iter().flat_map(|p| p.sentences.clone()).collect();
    let emb = embeddings(&model_config, config)?;
    let outcome = cross_validate(&sentences, &gold, &model_config, &tag_set, &train_config, &emb, &mut |f, l| {
        log_epoch(&format!("fold {f} "), l)
    })
    .map_err(|e| CliError::Run(e.to_string()))?;

    create_dir(&out)?;
    for (f, fold) in outcome.folds.iter().enumerate() {
        let path = out.join(format!("fold-{f}.json"));
        save_checkpoint(&fold.model, &path).map_err(|e| CliError::Run(e.to_string()))?;
    }
    write_json(&out.join("folds.json"), &outcome.plan)?;
    let originals: Vec<Document> = prepared
        .iter()
        .map(|p| p.tokenized.document.clone())
        .filter(|d| gold.contains_key(&d.doc_id))
        .collect();
    let oof = out.join("oof");
    write_corpus(&with_mentions(&originals, &outcome.out_of_fold), &oof)
        .map_err(|e| run_err(oof.display())(e.to_string()))?;
    let table = write_report(&out, &outcome.report)?;
    print!("{table}");
    Ok(())
}

pub fn predict(config: &RunConfig, corpus: PathBuf, models: &[PathBuf], out: PathBuf) -> Result<()> {
    let loaded = models
        .iter()
        .map(|p| load_checkpoint(p, None).map_err(|e| CliError::Run(e.to_string())))
        .collect::<Result<Vec<Model>>>()?;
    let first = loaded.first().ok_or_else(|| CliError::Config("no model given".into()))?;
    if let Some(m) = loaded.iter().find(|m| m.tag_set != first.tag_set) {
        return Err(CliError::Run(format!("models disagree on the tag set ({} vs {} tags)", m.tag_set.len(), first.tag_set.len())));
    }
    let docs: Vec<Document> = load(&corpus, config.offset_policy)?
        .documents
        .into_iter()
        .filter(|d| !d.doc_id.contains(srtag::augment::PIVOT_SEPARATOR))
        .collect();
    let prepared = prepare(&docs, &first.tag_set, &first.config, config)?;
    let emb = embeddings(&first.config, config)?;
    let mut predicted = MentionsByDoc::new();
    for p in &prepared {
        let mentions = predict_document(&loaded, p, &emb).map_err(|e| CliError::Run(e.to_string()))?;
        predicted.insert(p.tokenized.document.doc_id.clone(), mentions);
    }
    write_corpus(&with_mentions(&docs, &predicted), &out).map_err(|e| run_err(out.display())(e.to_string()))?;
    log::info!("{} documents annotated by {} model(s) -> {}", docs.len(), loaded.len(), out.display());
    Ok(())
}

pub struct ScoreOptions {
    pub threshold: f64,
    pub denominator: Denominator,
    pub exact: bool,
}

pub fn score(config: &RunConfig, gold: PathBuf, pred: PathBuf, out: Option<PathBuf>, opts: ScoreOptions) -> Result<()> {
    let by_doc = |c: Corpus| -> MentionsByDoc { c.documents.into_iter().map(|d| (d.doc_id, d.mentions)).collect() };
    let gold_docs = load(&gold, config.offset_policy)?;
    let mut pred_docs = by_doc(load(&pred, config.offset_policy)?);
    let gold_docs = by_doc(gold_docs);
    for id in gold_docs.keys() {
        pred_docs.entry(id.clone()).or_default();
    }
    let report = if opts.exact {
        exact_match_f1(&gold_docs, &pred_docs)
    } else {
        partial_match_f1(&gold_docs, &pred_docs, opts.threshold, opts.denominator)
            .map_err(|e| CliError::Config(e.to_string()))?
    };
    let table = match out {
        Some(dir) => {
            create_dir(&dir)?;
            write_report(&dir, &report)?
        }
        None => per_class_table(&report),
    };
    print!("{table}");
    Ok(())
}
