//! Helpers shared by the integration tests: independent oracles, fixture
//! generators and small HTTP utilities.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc, Weekday};
use emotrack::categorize::CategoryLabel;
use emotrack::reportgen::{CategoryPipeline, EventLabeler, Report, ReportError};
use emotrack::service::{AppState, Clock, ServiceConfig};
use emotrack::session::{ChangeStatus, Completion, Mood, MoodSession};
use emotrack::{Document, DocumentPath, FixtureProvider, KeywordCategorizer, Store, TimeRange, WatchEvent};
use rand::rngs::StdRng;
use rand::Rng;
use tower::ServiceExt;

pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

pub fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(FIXTURES).join(name)
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

// ---------------------------------------------------------------------------
// Time zone oracle: the EU summer-time rule, written out by hand.

fn last_sunday(year: i32, month: u32) -> NaiveDate {
    let mut d = date(year, month + 1, 1) - Duration::days(1);
    while d.weekday() != Weekday::Sun {
        d -= Duration::days(1);
    }
    d
}

/// Wall-clock time in London: UTC+1 from the last Sunday of March 01:00 UTC
/// until the last Sunday of October 01:00 UTC, UTC otherwise.
pub fn london_wall_clock(utc: NaiveDateTime) -> String {
    let year = utc.year();
    let begin = last_sunday(year, 3).and_hms_opt(1, 0, 0).unwrap();
    let end = last_sunday(year, 10).and_hms_opt(1, 0, 0).unwrap();
    let local = if utc >= begin && utc < end {
        utc + Duration::hours(1)
    } else {
        utc
    };
    local.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// Eight instants on both sides of the 2024 transitions.
pub fn dst_instants() -> Vec<&'static str> {
    vec![
        "2024-03-31T00:00:00Z",
        "2024-03-31T00:59:59Z",
        "2024-03-31T01:00:00Z",
        "2024-03-31T01:30:00Z",
        "2024-10-27T00:00:00Z",
        "2024-10-27T00:59:59Z",
        "2024-10-27T01:00:00Z",
        "2024-10-27T01:30:00Z",
    ]
}

// ---------------------------------------------------------------------------
// SUS oracle.

/// Odd items contribute `answer - 1`, even items `5 - answer`; the sum is
/// scaled by 2.5.
pub fn sus_oracle(answers: &[u8; 10]) -> f64 {
    let mut sum = 0i32;
    for (i, &a) in answers.iter().enumerate() {
        let item = i + 1;
        sum += if item % 2 == 1 { a as i32 - 1 } else { 5 - a as i32 };
    }
    sum as f64 * 2.5
}

// ---------------------------------------------------------------------------
// Report fixtures and the brute-force oracle.

const LOCAL: &str = "%Y-%m-%d %H:%M:%S";
const LABELS: [&str; 4] = ["Music", "Sport", "Gaming", "Education"];

pub fn fixture_label(video_id: &str) -> &'static str {
    LABELS[video_id.bytes().map(usize::from).sum::<usize>() % LABELS.len()]
}

/// Deterministic labeler used for generated fixtures.
pub fn fixture_labeler() -> impl EventLabeler {
    |e: &WatchEvent| -> Result<CategoryLabel, ReportError> {
        Ok(CategoryLabel::parse(fixture_label(&e.video_id)).expect("valid label"))
    }
}

#[derive(Clone, Debug)]
pub struct ReportFixture {
    pub events: Vec<WatchEvent>,
    pub sessions: Vec<MoodSession>,
    pub first_date: NaiveDate,
    pub dates: i64,
}

fn local_string(t: NaiveDateTime) -> String {
    t.format(LOCAL).to_string()
}

fn event_at(local: NaiveDateTime, video_id: &str, index: usize) -> WatchEvent {
    WatchEvent {
        video_id: video_id.to_owned(),
        url: format!("https://www.youtube.com/watch?v={video_id}"),
        watched_at_utc: Utc.from_utc_datetime(&local),
        watched_at_local: local_string(local),
        is_short: false,
        source_index: index,
    }
}

fn random_mood(rng: &mut StdRng) -> Mood {
    [Mood::NotGood, Mood::Okay, Mood::Good][rng.random_range(0..3)]
}

/// Up to 50 events and 10 non-overlapping sessions over at most 7 dates.
/// Some sessions are left open or abandoned, some cross midnight, some
/// events sit exactly on window edges and some fall outside every window.
pub fn random_fixture(rng: &mut StdRng) -> ReportFixture {
    let first_date = date(2024, 3, 28) + Duration::days(rng.random_range(0..200));
    let dates = rng.random_range(1..=7i64);
    let origin = first_date.and_hms_opt(0, 0, 0).unwrap();
    let span = dates * 86_400;

    let n_sessions = rng.random_range(0..=10usize);
    let mut points: Vec<i64> = Vec::new();
    while points.len() < n_sessions * 2 {
        let p = rng.random_range(0..span);
        if !points.contains(&p) {
            points.push(p);
        }
    }
    points.sort_unstable();
    let mut sessions = Vec::new();
    let mut windows = Vec::new();
    for pair in points.chunks(2) {
        let start = origin + Duration::seconds(pair[0]);
        let stop = origin + Duration::seconds(pair[1]);
        windows.push((start, stop));
        let before = random_mood(rng);
        let roll = rng.random_range(0..20);
        let session = if roll == 0 {
            let mut s = MoodSession::open(local_string(start), before);
            s.abandoned = true;
            s
        } else if roll == 1 {
            MoodSession::open(local_string(start), before)
        } else {
            MoodSession::completed(local_string(start), before, local_string(stop), random_mood(rng))
        };
        sessions.push(session);
    }

    let ids = ["aaaaaaaaaaa", "bbbbbbbbbbb", "ccccccccccc", "ddddddddddd", "eeeeeeeeeee", "fffffffffff"];
    let n_events = rng.random_range(0..=50usize);
    let mut events = Vec::new();
    for i in 0..n_events {
        let id = ids[rng.random_range(0..ids.len())];
        let local = match rng.random_range(0..10) {
            // On a window edge.
            0 if !windows.is_empty() => {
                let (s, e) = windows[rng.random_range(0..windows.len())];
                if rng.random_bool(0.5) {
                    s
                } else {
                    e
                }
            }
            // Stray: before or after the fixture's dates.
            1 => {
                if rng.random_bool(0.5) {
                    origin - Duration::seconds(rng.random_range(1..86_400))
                } else {
                    origin + Duration::seconds(span + rng.random_range(0..86_400))
                }
            }
            _ => origin + Duration::seconds(rng.random_range(0..span)),
        };
        events.push(event_at(local, id, i));
    }
    ReportFixture {
        events,
        sessions,
        first_date,
        dates,
    }
}

/// A range over (and sometimes slightly beyond) the fixture's dates.
pub fn random_range(rng: &mut StdRng, f: &ReportFixture) -> TimeRange {
    let a = rng.random_range(-1..=f.dates);
    let b = rng.random_range(a..=f.dates);
    TimeRange::new(f.first_date + Duration::days(a), f.first_date + Duration::days(b)).unwrap()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatDetail {
    pub session_id: String,
    pub status: ChangeStatus,
    pub videos: usize,
    pub categories: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatDay {
    pub better: usize,
    pub same: usize,
    pub worse: usize,
    pub total: usize,
    pub details: Vec<FlatDetail>,
}

pub type FlatReport = BTreeMap<NaiveDate, FlatDay>;

pub fn flatten(report: &Report) -> FlatReport {
    report
        .iter()
        .map(|(d, day)| {
            let details = day
                .details
                .iter()
                .map(|x| FlatDetail {
                    session_id: x.session_id.clone(),
                    status: x.status,
                    videos: x.video_count,
                    categories: x
                        .category_counts
                        .iter()
                        .map(|(k, v)| (k.as_str().to_owned(), *v))
                        .collect(),
                })
                .collect();
            let s = &day.summary;
            (
                *d,
                FlatDay {
                    better: s.better,
                    same: s.same,
                    worse: s.worse,
                    total: s.total_videos,
                    details,
                },
            )
        })
        .collect()
}

fn rank(m: Mood) -> i32 {
    match m {
        Mood::NotGood => 0,
        Mood::Okay => 1,
        Mood::Good => 2,
    }
}

/// Naive recomputation: for every date of the range, every session started
/// that day, every event, compare parsed timestamps.
pub fn oracle_report(range: TimeRange, events: &[WatchEvent], sessions: &[MoodSession]) -> FlatReport {
    let mut out = FlatReport::new();
    let mut day = range.start();
    while day <= range.end() {
        let mut todays: Vec<(&MoodSession, &Completion)> = Vec::new();
        for s in sessions {
            let Some(c) = &s.completion else { continue };
            if s.abandoned {
                continue;
            }
            let start = NaiveDateTime::parse_from_str(&s.start_local, LOCAL).unwrap();
            if start.date() == day {
                todays.push((s, c));
            }
        }
        todays.sort_by(|a, b| a.0.start_local.cmp(&b.0.start_local));
        if !todays.is_empty() {
            let mut flat = FlatDay {
                better: 0,
                same: 0,
                worse: 0,
                total: 0,
                details: Vec::new(),
            };
            for (s, c) in todays {
                let start = NaiveDateTime::parse_from_str(&s.start_local, LOCAL).unwrap();
                let stop = NaiveDateTime::parse_from_str(&c.stop_local, LOCAL).unwrap();
                let diff = rank(c.after_mood) - rank(s.before_mood);
                let status = if diff > 0 {
                    flat.better += 1;
                    ChangeStatus::Better
                } else if diff == 0 {
                    flat.same += 1;
                    ChangeStatus::Same
                } else {
                    flat.worse += 1;
                    ChangeStatus::Worse
                };
                let mut videos = 0;
                let mut categories = BTreeMap::new();
                for e in events {
                    let t = NaiveDateTime::parse_from_str(&e.watched_at_local, LOCAL).unwrap();
                    if start <= t && t <= stop {
                        videos += 1;
                        *categories.entry(fixture_label(&e.video_id).to_owned()).or_insert(0) += 1;
                    }
                }
                flat.total += videos;
                flat.details.push(FlatDetail {
                    session_id: s.start_local.clone(),
                    status,
                    videos,
                    categories,
                });
            }
            out.insert(day, flat);
        }
        day += Duration::days(1);
    }
    out
}

/// Sessions at the given local hours on 2024-04-22, one minute long, with
/// the requested statuses and `videos[i]` events inside each.
pub fn worked_day(hours: &[u32], statuses: &[ChangeStatus], videos: &[usize]) -> (Vec<MoodSession>, Vec<WatchEvent>) {
    let day = date(2024, 4, 22);
    let mut sessions = Vec::new();
    let mut events = Vec::new();
    for ((&h, &st), &n) in hours.iter().zip(statuses).zip(videos) {
        let start = day.and_hms_opt(h, 0, 0).unwrap();
        let stop = start + Duration::minutes(50);
        let (before, after) = match st {
            ChangeStatus::Better => (Mood::NotGood, Mood::Good),
            ChangeStatus::Same => (Mood::Okay, Mood::Okay),
            ChangeStatus::Worse => (Mood::Good, Mood::Okay),
        };
        sessions.push(MoodSession::completed(local_string(start), before, local_string(stop), after));
        for k in 0..n {
            events.push(event_at(start + Duration::minutes(k as i64 + 1), "ggggggggggg", events.len()));
        }
    }
    (sessions, events)
}

// ---------------------------------------------------------------------------
// Session state machine enumeration.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Start,
    Stop,
}

/// Every start/stop sequence of length 1..=max.
pub fn all_sequences(max: usize) -> Vec<Vec<Op>> {
    let mut out = Vec::new();
    for len in 1..=max {
        for bits in 0..(1u32 << len) {
            out.push(
                (0..len)
                    .map(|i| if bits >> i & 1 == 1 { Op::Stop } else { Op::Start })
                    .collect(),
            );
        }
    }
    out
}

/// Runs one sequence against a fresh store; checks every step against a
/// two-state model. Returns a description of the first divergence.
pub fn check_sequence(ops: &[Op]) -> Result<(), String> {
    use emotrack::session::{load_sessions, SessionBook, SessionError};
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let book = SessionBook::new(Arc::clone(&store), "Europe/London".parse().unwrap());
    let moods = [Mood::Good, Mood::Okay, Mood::NotGood];
    let t0 = Utc.with_ymd_and_hms(2024, 4, 22, 9, 0, 0).unwrap();
    let mut watching = false;
    let mut completed = 0usize;
    for (i, op) in ops.iter().enumerate() {
        let now = t0 + Duration::minutes(i as i64);
        let mood = moods[i % 3];
        match (op, watching) {
            (Op::Start, false) => {
                book.start("u", mood, now).map_err(|e| format!("step {i}: start failed: {e}"))?;
                watching = true;
            }
            (Op::Start, true) => match book.start("u", mood, now) {
                Err(e @ SessionError::AlreadyWatching) if e.to_string() == "You are already watching" => {}
                other => return Err(format!("step {i}: expected AlreadyWatching, got {other:?}")),
            },
            (Op::Stop, true) => {
                book.stop("u", mood, now).map_err(|e| format!("step {i}: stop failed: {e}"))?;
                watching = false;
                completed += 1;
            }
            (Op::Stop, false) => match book.stop("u", mood, now) {
                Err(e @ SessionError::NotWatching) if e.to_string() == "You are not watching anything" => {}
                other => return Err(format!("step {i}: expected NotWatching, got {other:?}")),
            },
        }
        let sessions = load_sessions(&store, "u").map_err(|e| e.to_string())?;
        let open = sessions.iter().filter(|s| s.is_open()).count();
        let done = sessions.iter().filter(|s| s.is_complete()).count();
        if open > 1 {
            return Err(format!("step {i}: {open} open sessions"));
        }
        if open != usize::from(watching) || done != completed {
            return Err(format!("step {i}: store has {open} open / {done} complete, model {watching} / {completed}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Durability: a child process writes documents and acknowledges each one
// on stdout; the parent kills it and inspects what survived.

pub const DURABILITY_ENV: &str = "EMOTRACK_DURABILITY_DIR";

pub fn durability_doc(i: usize) -> (DocumentPath, Document) {
    let path = DocumentPath::parse(&format!("Users/writer/Items/doc {i:05}")).unwrap();
    let doc = Document::new()
        .with("index", i as i64)
        .with("payload", "x".repeat(512 + i * 7))
        .with("odd", i % 2 == 1);
    (path, doc)
}

/// Body of the child process. Does nothing unless the environment asks.
pub fn durability_child_if_requested() {
    let Ok(dir) = std::env::var(DURABILITY_ENV) else { return };
    let store = Store::open(dir).unwrap();
    let mut out = std::io::stdout().lock();
    for i in 0..100_000 {
        let (path, doc) = durability_doc(i);
        store.put_document(&path, &doc).unwrap();
        writeln!(out, "ACK {i}").unwrap();
        out.flush().unwrap();
    }
    std::thread::sleep(std::time::Duration::from_secs(600));
}

/// Spawns this test binary running `child_test`, kills it after `acks`
/// acknowledgements and verifies every acknowledged document.
pub fn durability_check(child_test: &str, acks: usize) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut child = Command::new(std::env::current_exe().unwrap())
        .args([child_test, "--exact", "--nocapture", "--test-threads=1"])
        .env(DURABILITY_ENV, dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut acked = Vec::new();
    let reader = BufReader::new(child.stdout.take().unwrap());
    for line in reader.lines() {
        let line = line.map_err(|e| e.to_string())?;
        if let Some(n) = line.strip_prefix("ACK ") {
            acked.push(n.trim().parse::<usize>().map_err(|e| e.to_string())?);
            if acked.len() >= acks {
                break;
            }
        }
    }
    child.kill().map_err(|e| e.to_string())?;
    let _ = child.wait();
    if acked.len() < acks {
        return Err(format!("child acknowledged only {} writes", acked.len()));
    }

    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    for &i in &acked {
        let (path, doc) = durability_doc(i);
        let bytes = std::fs::read(store.document_file(&path)).map_err(|e| format!("doc {i}: {e}"))?;
        if bytes != doc.to_canonical_json() {
            return Err(format!("doc {i} differs after restart"));
        }
        if store.get_document(&path).map_err(|e| e.to_string())? != doc {
            return Err(format!("doc {i} does not read back"));
        }
    }
    // Whatever was in flight is either absent or whole.
    let listed = store
        .list_collection(&DocumentPath::parse("Users/writer/Items").unwrap())
        .map_err(|e| format!("listing after restart: {e}"))?;
    if listed.len() < acks {
        return Err(format!("listing shows {} documents", listed.len()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Service helpers.

pub const ORIGIN: &str = "http://localhost:3000";

pub fn fixture_pipeline() -> Arc<dyn EventLabeler> {
    Arc::new(CategoryPipeline::new(
        FixtureProvider::load(fixture("metadata.tsv")).unwrap(),
        KeywordCategorizer::default(),
    ))
}

/// Clock that returns the given instants in turn, then repeats the last.
pub fn scripted_clock(instants: Vec<chrono::DateTime<Utc>>) -> Clock {
    let next = std::sync::atomic::AtomicUsize::new(0);
    Arc::new(move || {
        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        instants[i.min(instants.len() - 1)]
    })
}

pub fn test_app(data_dir: &Path, configure: impl FnOnce(&mut ServiceConfig), clock: Clock) -> Router {
    let mut config = ServiceConfig::new(data_dir);
    config.allow_origin = Some(ORIGIN.to_owned());
    configure(&mut config);
    let state = AppState::new(config, fixture_pipeline(), clock).unwrap();
    emotrack::service::router(Arc::new(state))
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, HeaderMap, serde_json::Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let json = serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null);
    (status, headers, json)
}

pub fn post_json(path: &str, body: serde_json::Value) -> Request<Body> {
    Request::post(path)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

pub const BOUNDARY: &str = "emotrack-test-boundary";

pub fn multipart_upload(uid: &str, file_name: &str, content: &[u8]) -> Request<Body> {
    let mut body = Vec::new();
    write!(
        body,
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"uid\"\r\n\r\n{uid}\r\n\
         --{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\n\
         Content-Type: application/json\r\n\r\n"
    )
    .unwrap();
    body.extend_from_slice(content);
    write!(body, "\r\n--{BOUNDARY}--\r\n").unwrap();
    Request::post("/api/upload")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let p = entry.path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
