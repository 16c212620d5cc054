//! Choosing metadata providers and categorizers from configuration, and the
//! ingest path shared by the command line and the HTTP service.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono_tz::Tz;

use crate::categorize::{
    Categorizer, FallbackCategorizer, KeywordCategorizer, KeywordTableError, LlmCategorizer,
    LlmConfig,
};
use crate::ingest::{self, IngestCounts, IngestError, IngestOutcome};
use crate::layout;
use crate::metadata::{
    CachedProvider, FixtureError, FixtureProvider, MetadataProvider, RemoteConfig, RemoteProvider,
    RetryingProvider,
};
use crate::reportgen::{CategoryPipeline, EventLabeler};
use crate::store::{Document, Store, StoreError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum CategorizerMode {
    #[default]
    Keyword,
    Llm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum MetadataMode {
    #[default]
    Fixture,
    Remote,
}

#[derive(Clone, Debug, Default)]
pub struct PipelineConfig {
    pub categorizer: CategorizerMode,
    pub metadata: MetadataMode,
    /// Metadata table for the fixture provider; none means every video is
    /// unavailable.
    pub fixture_path: Option<PathBuf>,
    /// Replacement for the bundled keyword table.
    pub keywords_path: Option<PathBuf>,
    pub youtube_api_key: Option<String>,
    pub youtube_base_url: Option<String>,
    pub llm_api_key: Option<String>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_temperature: Option<f64>,
    /// Attempts per upstream call before giving up.
    pub upstream_attempts: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Keywords(#[from] KeywordTableError),
    #[error("{0} is required for {1}")]
    MissingKey(&'static str, &'static str),
    #[error("{0}")]
    Client(String),
}

impl PipelineConfig {
    pub fn build_labeler(&self) -> Result<Arc<dyn EventLabeler>, ConfigError> {
        let attempts = self.upstream_attempts.max(1);
        let provider: Box<dyn MetadataProvider> = match self.metadata {
            MetadataMode::Fixture => Box::new(match &self.fixture_path {
                Some(p) => FixtureProvider::load(p)?,
                None => FixtureProvider::default(),
            }),
            MetadataMode::Remote => {
                let key = self
                    .youtube_api_key
                    .clone()
                    .ok_or(ConfigError::MissingKey(RemoteConfig::API_KEY_ENV, "remote metadata"))?;
                let mut cfg = RemoteConfig::new(key);
                if let Some(url) = &self.youtube_base_url {
                    cfg.base_url = url.clone();
                }
                let remote = RemoteProvider::new(cfg).map_err(|e| ConfigError::Client(e.message))?;
                Box::new(RetryingProvider::new(remote, attempts, Duration::from_millis(250)))
            }
        };
        let keywords = match &self.keywords_path {
            Some(p) => KeywordCategorizer::load(p)?,
            None => KeywordCategorizer::default(),
        };
        let categorizer: Box<dyn Categorizer> = match self.categorizer {
            CategorizerMode::Keyword => Box::new(keywords),
            CategorizerMode::Llm => {
                let key = self
                    .llm_api_key
                    .clone()
                    .ok_or(ConfigError::MissingKey(LlmConfig::API_KEY_ENV, "the llm categorizer"))?;
                let mut cfg = LlmConfig::new(key);
                if let Some(e) = &self.llm_endpoint {
                    cfg.endpoint = e.clone();
                }
                if let Some(m) = &self.llm_model {
                    cfg.model = m.clone();
                }
                if let Some(t) = self.llm_temperature {
                    cfg.temperature = t;
                }
                let llm = LlmCategorizer::new(cfg).map_err(|e| ConfigError::Client(e.message))?;
                Box::new(FallbackCategorizer::new(llm, keywords, attempts))
            }
        };
        Ok(Arc::new(CategoryPipeline::new(
            CachedProvider::new(provider),
            categorizer,
        )))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestStoreError {
    #[error(transparent)]
    Parse(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Stores normalized events under `YouTube Watch History`, one document per
/// event named by its UTC watch time.
pub fn store_events(store: &Store, uid: &str, outcome: &IngestOutcome) -> Result<(), StoreError> {
    layout::register_user(store, uid)?;
    let history = layout::watch_history(uid)?;
    for event in &outcome.events {
        let doc = Document::new()
            .with("url", event.url.as_str())
            .with("time", event.watched_at_local.as_str());
        store.put_document(&history.child(ingest::takeout_time_key(event.watched_at_utc))?, &doc)?;
    }
    Ok(())
}

/// Parses a Takeout export and stores its events for `uid`.
pub fn ingest_into_store(
    store: &Store,
    uid: &str,
    content: &[u8],
    zone: Tz,
) -> Result<IngestCounts, IngestStoreError> {
    let outcome = ingest::ingest_bytes(content, zone)?;
    store_events(store, uid, &outcome)?;
    Ok(outcome.counts())
}
