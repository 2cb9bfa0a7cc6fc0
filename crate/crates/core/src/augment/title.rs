use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Abbreviation, AugmentError};
use crate::corpus::Token;

pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
    "did", "do", "does", "doing", "down", "during", "each", "either", "et", "few", "for", "from", "further",
    "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how",
    "however", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may", "me", "might", "more",
    "most", "must", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "ourselves", "out", "over", "own", "per", "same", "shall", "she", "should",
    "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there",
    "these", "they", "this", "those", "through", "thus", "to", "too", "under", "until", "up", "upon",
    "us", "very", "via", "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who",
    "whom", "why", "will", "with", "within", "without", "would", "you", "your", "yours", "yourself",
    "yourselves", "also", "among", "amongst", "although", "versus", "vs", "whereas", "whose", "yet",
];

pub fn is_stopword(word: &str) -> bool {
    let w = word.to_lowercase();
    STOPWORDS.contains(&w.as_str())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleRecord {
    pub doc_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
}

fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !is_stopword(w))
        .map(str::to_lowercase)
}

/// Per token: true when the lowercased token is a non-stopword of the title,
/// or when it is a detected short form whose long form shares a non-stopword
/// with the title. Without a title every flag is false.
pub fn in_title_flags(tokens: &[Token], title: Option<&TitleRecord>, abbreviations: &[Abbreviation]) -> Vec<bool> {
    let Some(title) = title else {
        return vec![false; tokens.len()];
    };
    let words: HashSet<String> = content_words(&title.title).collect();
    tokens
        .iter()
        .map(|t| {
            let w = t.text.to_lowercase();
            (!is_stopword(&w) && words.contains(&w))
                || abbreviations
                    .iter()
                    .any(|a| a.short_form == t.text && content_words(&a.long_form).any(|x| words.contains(&x)))
        })
        .collect()
}

/// Fetches titles by document id from a literature service, with a JSON file
/// cache keyed by document id.
pub struct TitleFetcher {
    pub base_url: String,
    pub cache_path: Option<PathBuf>,
    cache: BTreeMap<String, TitleRecord>,
    agent: ureq::Agent,
}

impl TitleFetcher {
    pub fn new(base_url: impl Into<String>, cache_path: Option<PathBuf>) -> Result<Self, AugmentError> {
        let mut cache = BTreeMap::new();
        if let Some(path) = cache_path.as_ref().filter(|p| p.exists()) {
            let err = |message: String| AugmentError::File {
                path: path.display().to_string(),
                message,
            };
            let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            cache = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
        }
        Ok(TitleFetcher {
            base_url: base_url.into(),
            cache_path,
            cache,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
        })
    }

    /// Offline fetcher serving only the given records.
    pub fn from_records(records: impl IntoIterator<Item = TitleRecord>) -> Self {
        TitleFetcher {
            base_url: String::new(),
            cache_path: None,
            cache: records.into_iter().map(|r| (r.doc_id.clone(), r)).collect(),
            agent: ureq::Agent::new(),
        }
    }

    pub fn cached(&self, doc_id: &str) -> Option<&TitleRecord> {
        self.cache.get(doc_id)
    }

    /// The record for `doc_id`; `None` (with a warning) when it is neither
    /// cached nor retrievable.
    pub fn fetch(&mut self, doc_id: &str) -> Option<TitleRecord> {
        if let Some(r) = self.cache.get(doc_id) {
            return Some(r.clone());
        }
        if self.base_url.is_empty() {
            log::warn!("{doc_id}: no title available");
            return None;
        }
        match self.request(doc_id) {
            Ok(record) => {
                self.cache.insert(doc_id.to_string(), record.clone());
                if let Err(e) = self.save() {
                    log::warn!("title cache not written: {e}");
                }
                Some(record)
            }
            Err(e) => {
                log::warn!("{doc_id}: title lookup failed: {e}");
                None
            }
        }
    }

    fn request(&self, doc_id: &str) -> Result<TitleRecord, AugmentError> {
        let transport = |message: String| AugmentError::Transport {
            message,
            retriable: false,
        };
        let body = self
            .agent
            .get(&self.base_url)
            .query("db", "pubmed")
            .query("retmode", "xml")
            .query("id", doc_id)
            .call()
            .map_err(|e| transport(e.to_string()))?
            .into_string()
            .map_err(|e| transport(e.to_string()))?;
        let grab = |tag: &str| {
            let re = Regex::new(&format!(r"(?s)<{tag}[^>]*>(.*?)</{tag}>")).expect("valid tag pattern");
            re.captures(&body).map(|c| c[1].trim().to_string())
        };
        let title = grab("ArticleTitle").ok_or_else(|| transport("no title in response".into()))?;
        Ok(TitleRecord {
            doc_id: doc_id.to_string(),
            title,
            abstract_text: grab("AbstractText"),
        })
    }

    pub fn save(&self) -> Result<(), AugmentError> {
        let Some(path) = &self.cache_path else { return Ok(()) };
        let err = |message: String| AugmentError::File {
            path: path.display().to_string(),
            message,
        };
        let json = serde_json::to_string_pretty(&self.cache).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| err(e.to_string()))
    }
}
