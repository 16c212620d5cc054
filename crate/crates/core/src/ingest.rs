//! Google Takeout `watch-history.json` ingestion.
//!
//! The export is a JSON array of entries like
//!
//! ```json
//! {"header": "YouTube", "title": "Watched X",
//!  "titleUrl": "https://www.youtube.com/watch?v=abc123",
//!  "time": "2024-01-15T12:00:00.123Z"}
//! ```
//!
//! Entries for removed videos have no `titleUrl`; they parse fine and are
//! skipped when converted to [`WatchEvent`]s.

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::metadata::{extract_video_id, VideoRef};

/// Wall-clock format used for every local timestamp and session key.
pub const LOCAL_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub const DEFAULT_ZONE: &str = "Europe/London";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed document at byte {offset}: {message}")]
    MalformedDocument { offset: usize, message: String },
    #[error("entry {index} is missing required field `{field}`")]
    MissingField { index: usize, field: &'static str },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TimeError {
    #[error("invalid ISO 8601 timestamp {0:?}")]
    InvalidTimestamp(String),
    #[error("unknown time zone {0:?}")]
    UnknownZone(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtitle {
    pub name: String,
    #[serde(default)]
    pub url: String,
}

/// One entry of the export, as written by Takeout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RawTakeoutEntry {
    #[serde(default)]
    pub header: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_url: Option<String>,
    pub time: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<Vec<Subtitle>>,
}

/// A watched video, normalized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WatchEvent {
    pub video_id: String,
    pub url: String,
    pub watched_at_utc: DateTime<Utc>,
    pub watched_at_local: String,
    pub is_short: bool,
    pub source_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoUrl,
    NotYoutube,
    NoVideoId,
    InvalidTime,
    Duplicate,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::NoUrl => "no url",
            SkipReason::NotYoutube => "not a www.youtube.com url",
            SkipReason::NoVideoId => "no video id",
            SkipReason::InvalidTime => "invalid time",
            SkipReason::Duplicate => "duplicate",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Conversion {
    Event(WatchEvent),
    Skipped { index: usize, reason: SkipReason },
}

/// Result of normalizing a whole export.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    pub events: Vec<WatchEvent>,
    pub skipped: Vec<(usize, SkipReason)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub ingested: usize,
    pub skipped: usize,
}

impl IngestOutcome {
    pub fn counts(&self) -> IngestCounts {
        IngestCounts {
            ingested: self.events.len(),
            skipped: self.skipped.len(),
        }
    }
}

pub fn parse_zone(zone: &str) -> Result<Tz, TimeError> {
    zone.parse::<Tz>()
        .map_err(|_| TimeError::UnknownZone(zone.to_owned()))
}

pub fn parse_instant(iso: &str) -> Result<DateTime<Utc>, TimeError> {
    DateTime::parse_from_rfc3339(iso.trim())
        .map(|dt| dt.with_timezone(&Utc))
        .map_err(|_| TimeError::InvalidTimestamp(iso.to_owned()))
}

/// Renders an instant as local wall-clock time, dropping fractional seconds.
pub fn render_local(instant: DateTime<Utc>, zone: Tz) -> String {
    instant.with_timezone(&zone).format(LOCAL_FORMAT).to_string()
}

/// ISO 8601 UTC instant to `YYYY-MM-DD HH:MM:SS` in `zone`.
pub fn convert_time(iso: &str, zone: &str) -> Result<String, TimeError> {
    let zone = parse_zone(zone)?;
    Ok(render_local(parse_instant(iso)?, zone))
}

/// Instant rendered the way Takeout writes it; used as the history key for
/// instants that did not come from an export.
pub fn takeout_time_key(instant: DateTime<Utc>) -> String {
    instant.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses the export into raw entries, in file order.
pub fn parse_takeout(content: &[u8]) -> Result<Vec<RawTakeoutEntry>, IngestError> {
    let text = std::str::from_utf8(content).map_err(|e| IngestError::MalformedDocument {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let items: Vec<&RawValue> = serde_json::from_str(text).map_err(|e| {
        let offset = if e.line() == 0 {
            0
        } else {
            byte_offset(text, e.line(), e.column())
        };
        IngestError::MalformedDocument {
            offset,
            message: e.to_string(),
        }
    })?;

    let base = text.as_ptr() as usize;
    let mut entries = Vec::with_capacity(items.len());
    for (index, raw) in items.into_iter().enumerate() {
        let offset = raw.get().as_ptr() as usize - base;
        let value: serde_json::Value = serde_json::from_str(raw.get())
            .expect("RawValue always holds valid JSON");
        let Some(obj) = value.as_object() else {
            return Err(IngestError::MalformedDocument {
                offset,
                message: format!("entry {index} is not an object"),
            });
        };
        if !obj.contains_key("time") {
            return Err(IngestError::MissingField {
                index,
                field: "time",
            });
        }
        let entry: RawTakeoutEntry =
            serde_json::from_value(value).map_err(|e| IngestError::MalformedDocument {
                offset,
                message: format!("entry {index}: {e}"),
            })?;
        entries.push(entry);
    }
    Ok(entries)
}

// serde_json reports 1-based lines and columns; columns count bytes.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start = if line <= 1 {
        0
    } else {
        text.match_indices('\n')
            .nth(line - 2)
            .map(|(i, _)| i + 1)
            .unwrap_or(text.len())
    };
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Normalizes a single entry. Never fails: anything unusable is skipped.
pub fn to_watch_event(entry: &RawTakeoutEntry, zone: Tz, index: usize) -> Conversion {
    let skip = |reason| Conversion::Skipped { index, reason };
    let Some(url) = entry.title_url.as_deref() else {
        return skip(SkipReason::NoUrl);
    };
    let video = match extract_video_id(url) {
        Some(v) => v,
        None => {
            return skip(if is_youtube_host(url) {
                SkipReason::NoVideoId
            } else {
                SkipReason::NotYoutube
            })
        }
    };
    let Ok(instant) = parse_instant(&entry.time) else {
        return skip(SkipReason::InvalidTime);
    };
    Conversion::Event(event_from_parts(video, url, instant, zone, index))
}

fn event_from_parts(
    video: VideoRef,
    url: &str,
    instant: DateTime<Utc>,
    zone: Tz,
    index: usize,
) -> WatchEvent {
    WatchEvent {
        video_id: video.id,
        url: url.to_owned(),
        watched_at_utc: instant,
        watched_at_local: render_local(instant, zone),
        is_short: video.is_short,
        source_index: index,
    }
}

fn is_youtube_host(url: &str) -> bool {
    url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(|h| h == "www.youtube.com"))
        .unwrap_or(false)
}

/// Converts all entries, dropping repeated (video id, time) pairs.
pub fn normalize(entries: &[RawTakeoutEntry], zone: Tz) -> IngestOutcome {
    let mut outcome = IngestOutcome::default();
    let mut seen: HashSet<(String, DateTime<Utc>)> = HashSet::new();
    for (index, entry) in entries.iter().enumerate() {
        match to_watch_event(entry, zone, index) {
            Conversion::Event(ev) => {
                if seen.insert((ev.video_id.clone(), ev.watched_at_utc)) {
                    outcome.events.push(ev);
                } else {
                    outcome.skipped.push((index, SkipReason::Duplicate));
                }
            }
            Conversion::Skipped { index, reason } => outcome.skipped.push((index, reason)),
        }
    }
    outcome
}

/// `parse_takeout` followed by [`normalize`].
pub fn ingest_bytes(content: &[u8], zone: Tz) -> Result<IngestOutcome, IngestError> {
    let entries = parse_takeout(content)?;
    Ok(normalize(&entries, zone))
}

/// Rebuilds an event from a stored history document (`url` + key instant).
pub fn event_from_stored(
    key: &str,
    url: &str,
    zone: Tz,
    index: usize,
) -> Option<WatchEvent> {
    let video = extract_video_id(url)?;
    let instant = parse_instant(key).ok()?;
    Some(event_from_parts(video, url, instant, zone, index))
}

/// Shorts rule: a `/shorts/` URL is always a short; otherwise a known
/// duration under a minute makes it one.
pub fn is_short_video(event: &WatchEvent, duration_seconds: Option<u64>) -> bool {
    event.is_short || duration_seconds.is_some_and(|d| d < 60)
}
