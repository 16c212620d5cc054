//! Mood-correlated viewing reports.
//!
//! Each completed session gets a [`SessionDetail`]: the videos whose local
//! watch time falls inside `[start, stop]` (both ends inclusive), counted
//! per category. Details are grouped under the session's start date and
//! rolled up into one [`DailySummary`] per date.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Mutex;

use chrono::{Days, NaiveDate};
use chrono_tz::Tz;
use serde::Serialize;
use serde_json::json;

use crate::categorize::{categorize, Categorizer, CategorizerError, CategoryLabel};
use crate::ingest::{event_from_stored, WatchEvent};
use crate::layout;
use crate::metadata::{fetch_metadata, MetadataProvider, ProviderError};
use crate::session::{load_sessions, ChangeStatus, MoodSession, CHANGE_STATUS, START_TIME};
use crate::store::{Document, Store, StoreError};

pub const WATCH_TOTAL: &str = "Watch Total Number";
pub const VIDEO_CATEGORY: &str = "Video Category";
const CATEGORY_FIELD_PREFIX: &str = "Video Category: ";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("invalid range: {start} is after {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("session {0} is not complete")]
    IncompleteSession(String),
    #[error(transparent)]
    Metadata(#[from] ProviderError),
    #[error(transparent)]
    Categorizer(#[from] CategorizerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ReportError {
    pub fn is_upstream(&self) -> bool {
        matches!(self, ReportError::Metadata(_) | ReportError::Categorizer(_))
    }
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

/// Inclusive date range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimeRange {
    start: NaiveDate,
    end: NaiveDate,
}

impl TimeRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(ReportError::InvalidRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> u64 {
        (self.end - self.start).num_days() as u64 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    LastWeek,
    LastMonth,
    LastThreeMonths,
    LastHalfYear,
}

impl Preset {
    /// Number of dates covered, today included.
    pub fn days(self) -> u64 {
        match self {
            Preset::LastWeek => 7,
            Preset::LastMonth => 30,
            Preset::LastThreeMonths => 90,
            Preset::LastHalfYear => 182,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RangeSpec {
    Preset(Preset),
    Custom(NaiveDate, NaiveDate),
}

pub fn resolve_range(spec: RangeSpec, today: NaiveDate) -> Result<TimeRange> {
    match spec {
        RangeSpec::Preset(p) => {
            let start = today
                .checked_sub_days(Days::new(p.days() - 1))
                .unwrap_or(NaiveDate::MIN);
            TimeRange::new(start, today)
        }
        RangeSpec::Custom(start, end) => TimeRange::new(start, end),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SessionDetail {
    pub session_id: String,
    pub status: ChangeStatus,
    pub video_count: usize,
    pub category_counts: BTreeMap<CategoryLabel, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub better: usize,
    pub same: usize,
    pub worse: usize,
    pub total_videos: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DayReport {
    pub summary: DailySummary,
    pub details: Vec<SessionDetail>,
}

pub type Report = BTreeMap<NaiveDate, DayReport>;

/// Assigns a category to a watched video.
pub trait EventLabeler: Send + Sync {
    fn label(&self, event: &WatchEvent) -> Result<CategoryLabel>;
}

impl<F> EventLabeler for F
where
    F: Fn(&WatchEvent) -> Result<CategoryLabel> + Send + Sync,
{
    fn label(&self, event: &WatchEvent) -> Result<CategoryLabel> {
        self(event)
    }
}

/// Metadata lookup followed by categorization, memoized per video id.
pub struct CategoryPipeline<P, C> {
    provider: P,
    categorizer: C,
    labels: Mutex<HashMap<String, CategoryLabel>>,
}

impl<P, C> CategoryPipeline<P, C> {
    pub fn new(provider: P, categorizer: C) -> Self {
        Self {
            provider,
            categorizer,
            labels: Mutex::new(HashMap::new()),
        }
    }
}

impl<P: MetadataProvider, C: Categorizer> EventLabeler for CategoryPipeline<P, C> {
    fn label(&self, event: &WatchEvent) -> Result<CategoryLabel> {
        if let Some(hit) = self
            .labels
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&event.video_id)
        {
            return Ok(hit.clone());
        }
        let meta = fetch_metadata(&self.provider, &event.video_id)?;
        let label = categorize(meta.as_ref(), &self.categorizer)?;
        self.labels
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(event.video_id.clone(), label.clone());
        Ok(label)
    }
}

/// Events inside the session window, in input order. Open sessions have no
/// window and match nothing.
pub fn videos_in_session<'a>(session: &MoodSession, events: &'a [WatchEvent]) -> Vec<&'a WatchEvent> {
    let Some(stop) = session.stop_local() else {
        return Vec::new();
    };
    let start = session.start_local.as_str();
    events
        .iter()
        .filter(|e| start <= e.watched_at_local.as_str() && e.watched_at_local.as_str() <= stop)
        .collect()
}

pub fn build_detail<L: EventLabeler + ?Sized>(
    session: &MoodSession,
    events: &[WatchEvent],
    labeler: &L,
) -> Result<SessionDetail> {
    let status = session
        .change_status()
        .ok_or_else(|| ReportError::IncompleteSession(session.id.clone()))?;
    let window = videos_in_session(session, events);
    let mut category_counts = BTreeMap::new();
    for event in &window {
        *category_counts.entry(labeler.label(event)?).or_insert(0) += 1;
    }
    Ok(SessionDetail {
        session_id: session.id.clone(),
        status,
        video_count: window.len(),
        category_counts,
    })
}

pub fn build_summary(date: NaiveDate, details: &[SessionDetail]) -> DailySummary {
    let count = |s| details.iter().filter(|d| d.status == s).count();
    DailySummary {
        date,
        better: count(ChangeStatus::Better),
        same: count(ChangeStatus::Same),
        worse: count(ChangeStatus::Worse),
        total_videos: details.iter().map(|d| d.video_count).sum(),
    }
}

/// Local calendar date a session belongs to.
pub fn session_date(session: &MoodSession) -> Option<NaiveDate> {
    session.start_time().map(|t| t.date())
}

/// Builds the report for every completed, non-abandoned session whose start
/// date lies in `range`. Dates without such sessions are absent.
pub fn build_report<L: EventLabeler + ?Sized>(
    range: TimeRange,
    events: &[WatchEvent],
    sessions: &[MoodSession],
    labeler: &L,
) -> Result<Report> {
    let mut by_date: BTreeMap<NaiveDate, Vec<&MoodSession>> = BTreeMap::new();
    for session in sessions {
        if !session.is_complete() || session.abandoned {
            continue;
        }
        let Some(date) = session_date(session) else {
            continue;
        };
        if range.contains(date) {
            by_date.entry(date).or_default().push(session);
        }
    }

    let mut report = Report::new();
    for (date, mut day_sessions) in by_date {
        day_sessions.sort_by(|a, b| a.id.cmp(&b.id));
        let details = day_sessions
            .into_iter()
            .map(|s| build_detail(s, events, labeler))
            .collect::<Result<Vec<_>>>()?;
        let summary = build_summary(date, &details);
        report.insert(date, DayReport { summary, details });
    }
    Ok(report)
}

/// Watch events stored for a user, in watch-time order.
pub fn load_events(store: &Store, uid: &str, zone: Tz) -> Result<Vec<WatchEvent>, StoreError> {
    let docs = store.list_collection(&layout::watch_history(uid)?)?;
    let mut events: Vec<WatchEvent> = docs
        .iter()
        .filter_map(|(key, doc)| event_from_stored(key, doc.text("url")?, zone, 0))
        .collect();
    events.sort_by_key(|e| e.watched_at_utc);
    for (i, e) in events.iter_mut().enumerate() {
        e.source_index = i;
    }
    Ok(events)
}

/// Writes the report under `Analysis Report`, replacing whatever was stored
/// for dates inside `range` before.
pub fn persist_report(store: &Store, uid: &str, range: TimeRange, report: &Report) -> Result<(), StoreError> {
    // Walk every date rather than the listing: an interrupted earlier run can
    // leave details or a summary without their date document.
    let mut date = range.start();
    while date <= range.end() {
        let details = layout::report_details(uid, date)?;
        for (id, _) in store.list_collection(&details)? {
            store.delete_document(&details.child(id)?)?;
        }
        store.delete_document(&layout::report_summary(uid, date)?)?;
        store.delete_document(&layout::report_date(uid, date)?)?;
        match date.succ_opt() {
            Some(next) => date = next,
            None => break,
        }
    }

    for (date, day) in report {
        let details = layout::report_details(uid, *date)?;
        for detail in &day.details {
            store.put_document(&details.child(detail.session_id.clone())?, &detail_document(detail))?;
        }
        store.put_document(&layout::report_summary(uid, *date)?, &summary_document(&day.summary))?;
        store.put_document(
            &layout::report_date(uid, *date)?,
            &Document::new().with("Date", layout::date_key(*date)),
        )?;
    }
    Ok(())
}

fn detail_document(detail: &SessionDetail) -> Document {
    let mut doc = Document::new()
        .with(START_TIME, detail.session_id.as_str())
        .with(CHANGE_STATUS, detail.status.as_str())
        .with(WATCH_TOTAL, detail.video_count as i64);
    for (label, n) in &detail.category_counts {
        doc.set(format!("{CATEGORY_FIELD_PREFIX}{label}"), *n as i64);
    }
    doc
}

fn summary_document(summary: &DailySummary) -> Document {
    Document::new()
        .with("Better", summary.better as i64)
        .with("Same", summary.same as i64)
        .with("Worse", summary.worse as i64)
        .with(WATCH_TOTAL, summary.total_videos as i64)
}

/// Loads a user's events and sessions, builds the report and stores it.
pub fn generate_report<L: EventLabeler + ?Sized>(
    store: &Store,
    uid: &str,
    range: TimeRange,
    zone: Tz,
    labeler: &L,
) -> Result<Report> {
    let events = load_events(store, uid, zone)?;
    let sessions = load_sessions(store, uid)?;
    let report = build_report(range, &events, &sessions, labeler)?;
    persist_report(store, uid, range, &report)?;
    Ok(report)
}

/// Export form: one object per date with the stored field names.
pub fn report_to_json(report: &Report) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for (date, day) in report {
        let details: Vec<_> = day
            .details
            .iter()
            .map(|d| {
                json!({
                    START_TIME: d.session_id,
                    CHANGE_STATUS: d.status.as_str(),
                    WATCH_TOTAL: d.video_count,
                    VIDEO_CATEGORY: d.category_counts,
                })
            })
            .collect();
        out.insert(
            layout::date_key(*date),
            json!({
                "Better": day.summary.better,
                "Same": day.summary.same,
                "Worse": day.summary.worse,
                WATCH_TOTAL: day.summary.total_videos,
                "Details": details,
            }),
        );
    }
    serde_json::Value::Object(out)
}

/// Fixed-width text rendering.
pub fn render_table(report: &Report) -> String {
    if report.is_empty() {
        return "no data\n".to_owned();
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10}  {:>6}  {:>6}  {:>6}  {:>6}",
        "Date", "Better", "Same", "Worse", "Videos"
    );
    for (date, day) in report {
        let s = &day.summary;
        let _ = writeln!(
            out,
            "{:<10}  {:>6}  {:>6}  {:>6}  {:>6}",
            layout::date_key(*date),
            s.better,
            s.same,
            s.worse,
            s.total_videos
        );
        for d in &day.details {
            let cats: Vec<String> = d
                .category_counts
                .iter()
                .map(|(c, n)| format!("{c}:{n}"))
                .collect();
            let _ = writeln!(
                out,
                "  {}  {:<6}  {:>3}  {}",
                d.session_id,
                d.status.as_str(),
                d.video_count,
                cats.join(" ")
            );
        }
    }
    out
}
