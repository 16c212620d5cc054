//! Single-word video categories.
//!
//! A [`Categorizer`] turns (title, description) into raw label text; the
//! raw text is always passed through [`sanitize_category`] so every label
//! that leaves this module is a non-empty run of `[0-9A-Za-z_]`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metadata::{Permits, VideoMetadata};

/// Reserved label for videos we could not categorize.
pub const UNKNOWN: &str = "Unknown";

/// Label used when no keyword matches.
pub const DEFAULT_CATEGORY: &str = "PeopleandBlogs";

/// YouTube's fifteen upload categories, sanitized, in tie-break order.
pub const NATIVE_CATEGORIES: [&str; 15] = [
    "CarsandVehicles",
    "Comedy",
    "Education",
    "Entertainment",
    "FilmandAnimation",
    "Gaming",
    "HowtoandStyle",
    "Music",
    "NewsandPolitics",
    "NonprofitsandActivism",
    "PeopleandBlogs",
    "PetsandAnimals",
    "ScienceandTechnology",
    "Sport",
    "TravelandEvents",
];

// Placeholder answers the model gives when it has nothing to go on.
const JUNK_LABELS: [&str; 5] = [
    "unknown",
    "unspecified",
    "uncategorized",
    "uncategorised",
    "undefined",
];

pub const DEFAULT_KEYWORDS: &str = include_str!("../data/category_keywords");

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryLabel(String);

impl CategoryLabel {
    pub fn unknown() -> Self {
        Self(UNKNOWN.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_unknown(&self) -> bool {
        self.0 == UNKNOWN
    }

    /// Accepts text that is already a valid label.
    pub fn parse(s: &str) -> Option<Self> {
        is_label(s).then(|| Self(s.to_owned()))
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CategoryLabel {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub fn is_label(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// Drops every character outside `[0-9A-Za-z_]`. Empty results and the
/// model's placeholder answers collapse to [`UNKNOWN`].
pub fn sanitize_category(raw: &str) -> CategoryLabel {
    let kept: String = raw
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    if kept.is_empty() || JUNK_LABELS.iter().any(|j| kept.eq_ignore_ascii_case(j)) {
        CategoryLabel::unknown()
    } else {
        CategoryLabel(kept)
    }
}

pub fn build_prompt(title: &str, description: &str) -> String {
    format!(
        "The YouTube video has the title: {title}, and the description: {description}. \
         Categorise this YouTube video in only ONE word strictly."
    )
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("categorizer failed: {message}")]
pub struct CategorizerError {
    pub message: String,
    pub retryable: bool,
}

pub trait Categorizer: Send + Sync {
    /// Raw, unsanitized label text.
    fn raw_label(&self, title: &str, description: &str) -> Result<String, CategorizerError>;
}

impl<C: Categorizer + ?Sized> Categorizer for Arc<C> {
    fn raw_label(&self, title: &str, description: &str) -> Result<String, CategorizerError> {
        (**self).raw_label(title, description)
    }
}

impl<C: Categorizer + ?Sized> Categorizer for Box<C> {
    fn raw_label(&self, title: &str, description: &str) -> Result<String, CategorizerError> {
        (**self).raw_label(title, description)
    }
}

/// Unavailable metadata is `Unknown` and never reaches the categorizer.
pub fn categorize<C: Categorizer + ?Sized>(
    meta: Option<&VideoMetadata>,
    categorizer: &C,
) -> Result<CategoryLabel, CategorizerError> {
    let Some(meta) = meta else {
        return Ok(CategoryLabel::unknown());
    };
    let Some(title) = meta.title.as_deref() else {
        return Ok(CategoryLabel::unknown());
    };
    let raw = categorizer.raw_label(title, meta.description.as_deref().unwrap_or_default())?;
    Ok(sanitize_category(&raw))
}

#[derive(Debug, thiserror::Error)]
pub enum KeywordTableError {
    #[error("reading keyword table: {0}")]
    Io(#[from] std::io::Error),
    #[error("keyword table line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug)]
struct KeywordRule {
    label: CategoryLabel,
    // Each keyword as its lowercase word sequence.
    keywords: Vec<Vec<String>>,
}

/// Deterministic offline categorizer: counts distinct keyword hits per
/// category over title + description and picks the best-scoring one.
#[derive(Clone, Debug)]
pub struct KeywordCategorizer {
    rules: Vec<KeywordRule>,
}

impl Default for KeywordCategorizer {
    fn default() -> Self {
        Self::parse(DEFAULT_KEYWORDS).expect("bundled keyword table is valid")
    }
}

impl KeywordCategorizer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KeywordTableError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, KeywordTableError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((label, list)) = line.split_once('\t') else {
                return Err(KeywordTableError::Parse {
                    line: i + 1,
                    message: "expected CategoryToken<TAB>keywords".into(),
                });
            };
            let Some(label) = CategoryLabel::parse(label.trim()) else {
                return Err(KeywordTableError::Parse {
                    line: i + 1,
                    message: format!("invalid category token {label:?}"),
                });
            };
            let keywords: Vec<Vec<String>> = list
                .split(',')
                .map(words)
                .filter(|w| !w.is_empty())
                .collect();
            if let Some(existing) = rules.iter_mut().find(|r: &&mut KeywordRule| r.label == label) {
                existing.keywords.extend(keywords);
            } else {
                rules.push(KeywordRule { label, keywords });
            }
        }
        // The fifteen native categories first, in their fixed order; any
        // extra tokens follow in file order.
        rules.sort_by_key(|r| {
            NATIVE_CATEGORIES
                .iter()
                .position(|c| *c == r.label.as_str())
                .unwrap_or(NATIVE_CATEGORIES.len())
        });
        Ok(Self { rules })
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategoryLabel> {
        self.rules.iter().map(|r| &r.label)
    }

    /// Per-category scores in tie-break order.
    pub fn scores(&self, title: &str, description: &str) -> Vec<(CategoryLabel, usize)> {
        let mut text = words(title);
        // Keep a phrase from spanning the title/description boundary.
        text.push(String::new());
        text.extend(words(description));
        self.rules
            .iter()
            .map(|rule| {
                let hits = rule
                    .keywords
                    .iter()
                    .filter(|kw| contains_phrase(&text, kw))
                    .count();
                (rule.label.clone(), hits)
            })
            .collect()
    }

    pub fn classify(&self, title: &str, description: &str) -> CategoryLabel {
        let mut best: Option<(CategoryLabel, usize)> = None;
        for (label, score) in self.scores(title, description) {
            if score > best.as_ref().map_or(0, |(_, s)| *s) {
                best = Some((label, score));
            }
        }
        best.map(|(l, _)| l)
            .unwrap_or_else(|| CategoryLabel(DEFAULT_CATEGORY.to_owned()))
    }
}

impl Categorizer for KeywordCategorizer {
    fn raw_label(&self, title: &str, description: &str) -> Result<String, CategorizerError> {
        Ok(self.classify(title, description).0)
    }
}

/// Keyword fallback with the bundled table.
pub fn fallback_categorize(title: &str, description: &str) -> CategoryLabel {
    thread_local! {
        static TABLE: KeywordCategorizer = KeywordCategorizer::default();
    }
    TABLE.with(|t| t.classify(title, description))
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_phrase(text: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && text.windows(phrase.len()).any(|w| w == phrase)
}

#[derive(Clone, Debug)]
pub struct LlmConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl LlmConfig {
    pub const DEFAULT_ENDPOINT: &'static str = "https://api.openai.com/v1/chat/completions";
    pub const DEFAULT_MODEL: &'static str = "gpt-3.5-turbo";
    pub const API_KEY_ENV: &'static str = "OPENAI_API_KEY";

    pub fn new(api_key: impl Into<String>) -> Self {
        Self {
            endpoint: Self::DEFAULT_ENDPOINT.to_owned(),
            api_key: api_key.into(),
            model: Self::DEFAULT_MODEL.to_owned(),
            temperature: 0.0,
            max_in_flight: 2,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Chat-completion backed categorizer: one user message holding the prompt,
/// the first choice's text is the raw label.
pub struct LlmCategorizer {
    config: LlmConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
}

impl LlmCategorizer {
    pub fn new(config: LlmConfig) -> Result<Self, CategorizerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| CategorizerError {
                message: format!("building http client: {e}"),
                retryable: false,
            })?;
        Ok(Self {
            permits: Permits::new(config.max_in_flight),
            config,
            client,
        })
    }
}

impl Categorizer for LlmCategorizer {
    fn raw_label(&self, title: &str, description: &str) -> Result<String, CategorizerError> {
        let prompt = build_prompt(title, description);
        let body = ChatRequest {
            model: &self.config.model,
            temperature: self.config.temperature,
            messages: [ChatMessage {
                role: "user",
                content: &prompt,
            }],
        };
        let _permit = self.permits.acquire();
        let resp = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| CategorizerError {
                message: e.to_string(),
                retryable: true,
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(CategorizerError {
                message: format!("upstream returned {status}"),
                retryable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| CategorizerError {
            message: format!("bad response body: {e}"),
            retryable: false,
        })?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

/// Tries the primary categorizer a few times, then falls back to keywords.
pub struct FallbackCategorizer<C> {
    primary: C,
    fallback: KeywordCategorizer,
    attempts: usize,
}

impl<C> FallbackCategorizer<C> {
    pub fn new(primary: C, fallback: KeywordCategorizer, attempts: usize) -> Self {
        Self {
            primary,
            fallback,
            attempts: attempts.max(1),
        }
    }
}

impl<C: Categorizer> Categorizer for FallbackCategorizer<C> {
    fn raw_label(&self, title: &str, description: &str) -> Result<String, CategorizerError> {
        for _ in 0..self.attempts {
            match self.primary.raw_label(title, description) {
                Ok(label) => return Ok(label),
                Err(e) if e.retryable => continue,
                Err(_) => break,
            }
        }
        self.fallback.raw_label(title, description)
    }
}
