//! Video id extraction and metadata lookup.
//!
//! Two providers ship: [`FixtureProvider`] reads a local tab-separated table
//! and [`RemoteProvider`] speaks the YouTube Data API v3 `videos.list` /
//! `videoCategories.list` shapes. [`CachedProvider`] memoizes either one for
//! the duration of a run.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoRef {
    pub id: String,
    pub is_short: bool,
}

/// Pulls the video id out of a `www.youtube.com` watch or shorts URL.
pub fn extract_video_id(url: &str) -> Option<VideoRef> {
    let parsed = Url::parse(url).ok()?;
    if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str() != Some("www.youtube.com")
    {
        return None;
    }
    let path = parsed.path();
    let (id, is_short) = if path == "/watch" || path == "/watch/" {
        let id = parsed
            .query_pairs()
            .find(|(k, _)| k == "v")
            .map(|(_, v)| v.into_owned())?;
        (id, false)
    } else {
        let rest = path.strip_prefix("/shorts/")?;
        (rest.trim_end_matches('/').to_owned(), true)
    };
    is_video_id(&id).then_some(VideoRef { id, is_short })
}

pub fn is_video_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Metadata for one video. A missing title means nothing else is known.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoMetadata {
    pub video_id: String,
    pub title: Option<String>,
    pub description: Option<String>,
    pub native_category: Option<String>,
    pub duration_seconds: Option<u64>,
}

impl VideoMetadata {
    pub fn new(
        video_id: impl Into<String>,
        title: impl Into<String>,
        description: impl Into<String>,
        native_category: Option<String>,
    ) -> Self {
        Self {
            video_id: video_id.into(),
            title: Some(title.into()),
            description: Some(description.into()),
            native_category,
            duration_seconds: None,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("metadata provider failed: {message}")]
pub struct ProviderError {
    pub message: String,
    pub retryable: bool,
}

impl ProviderError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// `Ok(None)` means the video is unavailable (deleted, private, no record);
/// `Err` means the lookup itself failed.
pub trait MetadataProvider: Send + Sync {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError>;
}

impl<P: MetadataProvider + ?Sized> MetadataProvider for Arc<P> {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError> {
        (**self).fetch(video_id)
    }
}

impl<P: MetadataProvider + ?Sized> MetadataProvider for Box<P> {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError> {
        (**self).fetch(video_id)
    }
}

pub fn fetch_metadata<P: MetadataProvider + ?Sized>(
    provider: &P,
    video_id: &str,
) -> Result<Option<VideoMetadata>, ProviderError> {
    if video_id.is_empty() {
        return Err(ProviderError::fatal("empty video id"));
    }
    let meta = provider.fetch(video_id)?;
    Ok(meta.filter(|m| m.title.is_some()))
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("reading fixture table: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Offline provider backed by a table of
/// `videoId<TAB>title<TAB>description<TAB>nativeCategory<TAB>durationSeconds`
/// lines. Empty cells are absent values; `\t`, `\n` and `\\` are escapes.
/// Lines starting with `#` are comments.
#[derive(Clone, Debug, Default)]
pub struct FixtureProvider {
    records: HashMap<String, VideoMetadata>,
}

impl FixtureProvider {
    pub fn new(records: impl IntoIterator<Item = VideoMetadata>) -> Self {
        Self {
            records: records
                .into_iter()
                .map(|m| (m.video_id.clone(), m))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<String> = line.split('\t').map(unescape).collect();
            if cells.len() > 5 {
                return Err(FixtureError::Parse {
                    line: line_no,
                    message: format!("expected at most 5 tab-separated cells, got {}", cells.len()),
                });
            }
            let cell = |i: usize| cells.get(i).filter(|c| !c.is_empty()).cloned();
            let id = cells[0].clone();
            if !is_video_id(&id) {
                return Err(FixtureError::Parse {
                    line: line_no,
                    message: format!("invalid video id {id:?}"),
                });
            }
            let duration_seconds = match cell(4) {
                Some(d) => Some(d.parse::<u64>().map_err(|_| FixtureError::Parse {
                    line: line_no,
                    message: format!("invalid duration {d:?}"),
                })?),
                None => None,
            };
            let title = cell(1);
            records.push(match title {
                Some(title) => VideoMetadata {
                    video_id: id,
                    title: Some(title),
                    description: Some(cell(2).unwrap_or_default()),
                    native_category: cell(3),
                    duration_seconds,
                },
                None => VideoMetadata {
                    video_id: id,
                    title: None,
                    description: None,
                    native_category: None,
                    duration_seconds,
                },
            });
        }
        Ok(Self::new(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serializes back into the table format, sorted by id.
    pub fn to_table(&self) -> String {
        let mut ids: Vec<&String> = self.records.keys().collect();
        ids.sort();
        let mut out = String::new();
        for id in ids {
            let m = &self.records[id];
            let cells = [
                m.video_id.clone(),
                m.title.clone().unwrap_or_default(),
                m.description.clone().unwrap_or_default(),
                m.native_category.clone().unwrap_or_default(),
                m.duration_seconds.map(|d| d.to_string()).unwrap_or_default(),
            ];
            let line: Vec<String> = cells.iter().map(|c| escape(c)).collect();
            out.push_str(&line.join("\t"));
            out.push('\n');
        }
        out
    }
}

impl MetadataProvider for FixtureProvider {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError> {
        Ok(self
            .records
            .get(video_id)
            .filter(|m| m.title.is_some())
            .cloned())
    }
}

fn unescape(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    let mut chars = cell.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn escape(cell: &str) -> String {
    cell.replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
        .replace('\r', "\\r")
}

/// Counting semaphore bounding in-flight upstream requests.
#[derive(Debug)]
pub(crate) struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a Permits);

impl Permits {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Clone, Debug)]
pub struct RemoteConfig {
    /// API root, e.g. `https://www.googleapis.com/youtube/v3`.
    pub base_url: String,
    pub api_key: String,
    pub max_in_flight: usize,
    /// Also request `contentDetails` to learn durations.
    pub with_duration: bool,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub const DEFAULT_BASE_URL: &'static str = "https://www.googleapis.com/youtube/v3";
    pub const API_KEY_ENV: &'static str = "YOUTUBE_API_KEY";

    pub fn new(api_key: impl Into<String>) -> Self {
        Self {
            base_url: Self::DEFAULT_BASE_URL.to_owned(),
            api_key: api_key.into(),
            max_in_flight: 4,
            with_duration: false,
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Deserialize)]
struct ListResponse<T> {
    #[serde(default = "Vec::new")]
    items: Vec<T>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct VideoItem {
    snippet: VideoSnippet,
    content_details: Option<ContentDetails>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct VideoSnippet {
    title: String,
    #[serde(default)]
    description: String,
    category_id: Option<String>,
}

#[derive(Deserialize)]
struct ContentDetails {
    duration: Option<String>,
}

#[derive(Deserialize)]
struct CategoryItem {
    snippet: CategorySnippet,
}

#[derive(Deserialize)]
struct CategorySnippet {
    title: String,
}

/// YouTube Data API v3 client: one `videos` call per id plus a
/// `videoCategories` call per distinct category id.
pub struct RemoteProvider {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
    categories: Mutex<HashMap<String, Option<String>>>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::fatal(format!("building http client: {e}")))?;
        Ok(Self {
            permits: Permits::new(config.max_in_flight),
            config,
            client,
            categories: Mutex::new(HashMap::new()),
        })
    }

    fn get<T: for<'de> Deserialize<'de>>(
        &self,
        endpoint: &str,
        params: &[(&str, &str)],
    ) -> Result<T, ProviderError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), endpoint);
        let _permit = self.permits.acquire();
        let resp = self
            .client
            .get(&url)
            .query(params)
            .query(&[("key", self.config.api_key.as_str())])
            .send()
            .map_err(|e| ProviderError::retryable(format!("{endpoint}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 403 || status.as_u16() == 429 || status.is_server_error();
            return Err(ProviderError {
                message: format!("{endpoint}: upstream returned {status}"),
                retryable,
            });
        }
        resp.json::<T>()
            .map_err(|e| ProviderError::fatal(format!("{endpoint}: bad response body: {e}")))
    }

    fn category_name(&self, category_id: &str) -> Result<Option<String>, ProviderError> {
        if let Some(hit) = self
            .categories
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(category_id)
        {
            return Ok(hit.clone());
        }
        let resp: ListResponse<CategoryItem> =
            self.get("videoCategories", &[("part", "snippet"), ("id", category_id)])?;
        let name = resp.items.into_iter().next().map(|c| c.snippet.title);
        self.categories
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(category_id.to_owned(), name.clone());
        Ok(name)
    }
}

impl MetadataProvider for RemoteProvider {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError> {
        let part = if self.config.with_duration {
            "snippet,contentDetails"
        } else {
            "snippet"
        };
        let resp: ListResponse<VideoItem> =
            self.get("videos", &[("part", part), ("id", video_id)])?;
        let Some(item) = resp.items.into_iter().next() else {
            return Ok(None);
        };
        let native_category = match item.snippet.category_id.as_deref() {
            Some(id) => self.category_name(id)?,
            None => None,
        };
        let duration_seconds = item
            .content_details
            .and_then(|c| c.duration)
            .and_then(|d| parse_iso_duration(&d));
        Ok(Some(VideoMetadata {
            video_id: video_id.to_owned(),
            title: Some(item.snippet.title),
            description: Some(item.snippet.description),
            native_category,
            duration_seconds,
        }))
    }
}

/// Parses the `PT#H#M#S` / `P#DT...` durations the Data API returns.
pub fn parse_iso_duration(s: &str) -> Option<u64> {
    let rest = s.strip_prefix('P')?;
    let (date_part, time_part) = match rest.split_once('T') {
        Some((d, t)) => (d, t),
        None => (rest, ""),
    };
    let mut total = 0u64;
    let mut any = false;
    for (part, units) in [(date_part, &[('W', 604_800u64), ('D', 86_400)][..]),
                          (time_part, &[('H', 3_600), ('M', 60), ('S', 1)][..])] {
        let mut num = String::new();
        for c in part.chars() {
            if c.is_ascii_digit() {
                num.push(c);
                continue;
            }
            let (_, scale) = units.iter().find(|(u, _)| *u == c)?;
            total += num.parse::<u64>().ok()? * scale;
            num.clear();
            any = true;
        }
        if !num.is_empty() {
            return None;
        }
    }
    any.then_some(total)
}

/// Retries retryable provider failures a fixed number of times.
pub struct RetryingProvider<P> {
    inner: P,
    attempts: usize,
    backoff: Duration,
}

impl<P> RetryingProvider<P> {
    pub fn new(inner: P, attempts: usize, backoff: Duration) -> Self {
        Self {
            inner,
            attempts: attempts.max(1),
            backoff,
        }
    }
}

impl<P: MetadataProvider> MetadataProvider for RetryingProvider<P> {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError> {
        let mut attempt = 1;
        loop {
            match self.inner.fetch(video_id) {
                Err(e) if e.retryable && attempt < self.attempts => {
                    std::thread::sleep(self.backoff * attempt as u32);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

type Slot = Arc<Mutex<Option<Option<VideoMetadata>>>>;

/// Per-run cache: at most one successful upstream call per id. Concurrent
/// callers for the same id wait on the first one. Failures are not cached.
pub struct CachedProvider<P> {
    inner: P,
    slots: Mutex<HashMap<String, Slot>>,
}

impl<P> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: MetadataProvider> MetadataProvider for CachedProvider<P> {
    fn fetch(&self, video_id: &str) -> Result<Option<VideoMetadata>, ProviderError> {
        let slot = {
            let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
            slots.entry(video_id.to_owned()).or_default().clone()
        };
        let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(hit) = guard.as_ref() {
            return Ok(hit.clone());
        }
        let fetched = self.inner.fetch(video_id)?;
        *guard = Some(fetched.clone());
        Ok(fetched)
    }
}
