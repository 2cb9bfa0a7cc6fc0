use std::collections::HashMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::AugmentError;

pub trait Translator {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, AugmentError>;
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, AugmentError> {
        Ok(text.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub source: String,
    pub target: String,
    pub text: String,
    pub translation: String,
}

/// Replays recorded translations, keyed by exact text and language pair.
#[derive(Clone, Debug, Default)]
pub struct FixtureTranslator {
    table: HashMap<(String, String, String), String>,
}

impl FixtureTranslator {
    pub fn new(entries: Vec<FixtureEntry>) -> Self {
        let table = entries
            .into_iter()
            .map(|e| ((e.source, e.target, e.text), e.translation))
            .collect();
        FixtureTranslator { table }
    }

    /// Reads a JSON array of [`FixtureEntry`].
    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let err = |message: String| AugmentError::File {
            path: path.display().to_string(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let entries: Vec<FixtureEntry> = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
        Ok(Self::new(entries))
    }
}

impl Translator for FixtureTranslator {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, AugmentError> {
        self.table
            .get(&(source.to_string(), target.to_string(), text.to_string()))
            .cloned()
            .ok_or_else(|| AugmentError::NoFixture {
                snippet: text.chars().take(40).collect(),
                source_lang: source.to_string(),
                target_lang: target.to_string(),
            })
    }
}

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct Response {
    text: String,
}

/// Posts `{text, source, target}` as JSON and expects `{text}` back.
/// Transport errors, 429 and 5xx responses are retried with exponential
/// backoff.
#[derive(Clone, Debug)]
pub struct HttpTranslator {
    pub url: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl HttpTranslator {
    pub const URL_VAR: &'static str = "SRTAG_TRANSLATOR_URL";
    pub const KEY_VAR: &'static str = "SRTAG_TRANSLATOR_KEY";

    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        HttpTranslator {
            url: url.into(),
            api_key,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }

    /// Configured from `SRTAG_TRANSLATOR_URL` and `SRTAG_TRANSLATOR_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(Self::URL_VAR).ok()?;
        Some(Self::new(url, std::env::var(Self::KEY_VAR).ok()))
    }

    fn attempt(&self, text: &str, source: &str, target: &str) -> Result<String, AugmentError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = Request { text, source, target };
        match req.send_json(&body) {
            Ok(resp) => resp
                .into_json::<Response>()
                .map(|r| r.text)
                .map_err(|e| AugmentError::Transport {
                    message: format!("bad response body: {e}"),
                    retriable: false,
                }),
            Err(ureq::Error::Status(code, _)) => Err(AugmentError::Transport {
                message: format!("HTTP {code}"),
                retriable: code == 429 || code >= 500,
            }),
            Err(e) => Err(AugmentError::Transport {
                message: e.to_string(),
                retriable: true,
            }),
        }
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, AugmentError> {
        let mut wait = self.backoff;
        let mut tries = 0;
        loop {
            match self.attempt(text, source, target) {
                Err(AugmentError::Transport { retriable: true, message }) if tries < self.max_retries => {
                    log::warn!("translation attempt {} failed ({message}), retrying", tries + 1);
                    thread::sleep(wait);
                    wait *= 2;
                    tries += 1;
                }
                other => return other,
            }
        }
    }
}
