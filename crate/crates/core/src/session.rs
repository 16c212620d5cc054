//! Start/stop mood sessions.
//!
//! A user is either idle or watching exactly one open session. Starting
//! writes a new `Mood Records` document keyed by the local start time;
//! stopping updates that same document with the after-mood, the stop time
//! and the derived change status.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDateTime, TimeDelta, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::ingest::{render_local, LOCAL_FORMAT};
use crate::layout;
use crate::store::{Document, Store, StoreError};

pub const BEFORE_MOOD: &str = "Before Watch Mood";
pub const START_TIME: &str = "Start Watch Time";
pub const AFTER_MOOD: &str = "After Watch Mood";
pub const STOP_TIME: &str = "Stop Watch Time";
pub const CHANGE_STATUS: &str = "Mood Change Status";
pub const ABANDONED: &str = "Abandoned";

pub const ALREADY_WATCHING_MSG: &str = "You are already watching";
pub const NOT_WATCHING_MSG: &str = "You are not watching anything";

/// Open sessions older than this are abandoned.
pub const ABANDON_AFTER: TimeDelta = TimeDelta::hours(24);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mood {
    #[serde(rename = "Not good")]
    NotGood,
    Okay,
    Good,
}

impl Mood {
    pub const ALL: [Mood; 3] = [Mood::Good, Mood::Okay, Mood::NotGood];

    pub fn rank(self) -> u8 {
        match self {
            Mood::NotGood => 0,
            Mood::Okay => 1,
            Mood::Good => 2,
        }
    }

    pub fn wire_name(self) -> &'static str {
        match self {
            Mood::Good => "Good",
            Mood::Okay => "Okay",
            Mood::NotGood => "Not good",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        Mood::ALL.into_iter().find(|m| m.wire_name() == s)
    }

    /// Lowercase command-line alias: `good`, `okay`, `notgood`.
    pub fn cli_word(self) -> &'static str {
        match self {
            Mood::Good => "good",
            Mood::Okay => "okay",
            Mood::NotGood => "notgood",
        }
    }
}

impl fmt::Display for Mood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown mood {0:?} (expected good, okay or notgood)")]
pub struct ParseMoodError(pub String);

impl FromStr for Mood {
    type Err = ParseMoodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mood::from_wire(s)
            .or_else(|| Mood::ALL.into_iter().find(|m| m.cli_word() == s))
            .ok_or_else(|| ParseMoodError(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChangeStatus {
    Better,
    Same,
    Worse,
}

impl ChangeStatus {
    pub const ALL: [ChangeStatus; 3] = [ChangeStatus::Better, ChangeStatus::Same, ChangeStatus::Worse];

    pub fn as_str(self) -> &'static str {
        match self {
            ChangeStatus::Better => "Better",
            ChangeStatus::Same => "Same",
            ChangeStatus::Worse => "Worse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ChangeStatus::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ChangeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn change_status(before: Mood, after: Mood) -> ChangeStatus {
    match after.rank().cmp(&before.rank()) {
        std::cmp::Ordering::Greater => ChangeStatus::Better,
        std::cmp::Ordering::Equal => ChangeStatus::Same,
        std::cmp::Ordering::Less => ChangeStatus::Worse,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub stop_local: String,
    pub after_mood: Mood,
    pub change_status: ChangeStatus,
}

/// One start/stop episode. `id` equals `start_local`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoodSession {
    pub id: String,
    pub start_local: String,
    pub before_mood: Mood,
    pub completion: Option<Completion>,
    pub abandoned: bool,
}

impl MoodSession {
    pub fn open(start_local: impl Into<String>, before_mood: Mood) -> Self {
        let start_local = start_local.into();
        Self {
            id: start_local.clone(),
            start_local,
            before_mood,
            completion: None,
            abandoned: false,
        }
    }

    pub fn completed(
        start_local: impl Into<String>,
        before_mood: Mood,
        stop_local: impl Into<String>,
        after_mood: Mood,
    ) -> Self {
        let mut s = Self::open(start_local, before_mood);
        s.complete(stop_local.into(), after_mood);
        s
    }

    fn complete(&mut self, stop_local: String, after_mood: Mood) {
        self.completion = Some(Completion {
            stop_local,
            after_mood,
            change_status: change_status(self.before_mood, after_mood),
        });
    }

    pub fn is_complete(&self) -> bool {
        self.completion.is_some()
    }

    pub fn is_open(&self) -> bool {
        self.completion.is_none() && !self.abandoned
    }

    pub fn stop_local(&self) -> Option<&str> {
        self.completion.as_ref().map(|c| c.stop_local.as_str())
    }

    pub fn change_status(&self) -> Option<ChangeStatus> {
        self.completion.as_ref().map(|c| c.change_status)
    }

    pub fn start_time(&self) -> Option<NaiveDateTime> {
        parse_local(&self.start_local)
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::new()
            .with(BEFORE_MOOD, self.before_mood.wire_name())
            .with(START_TIME, self.start_local.as_str());
        if let Some(c) = &self.completion {
            doc.set(AFTER_MOOD, c.after_mood.wire_name());
            doc.set(STOP_TIME, c.stop_local.as_str());
            doc.set(CHANGE_STATUS, c.change_status.as_str());
        }
        if self.abandoned {
            doc.set(ABANDONED, true);
        }
        doc
    }

    /// Reads a stored record. Half-written records (a stop time without an
    /// after-mood, say) come back as open.
    pub fn from_document(id: &str, doc: &Document) -> Option<Self> {
        let before_mood = Mood::from_wire(doc.text(BEFORE_MOOD)?)?;
        let start_local = doc.text(START_TIME).unwrap_or(id).to_owned();
        let mut session = Self {
            id: id.to_owned(),
            start_local,
            before_mood,
            completion: None,
            abandoned: doc.get(ABANDONED).and_then(|v| v.as_bool()).unwrap_or(false),
        };
        if let (Some(after), Some(stop)) = (
            doc.text(AFTER_MOOD).and_then(Mood::from_wire),
            doc.text(STOP_TIME),
        ) {
            session.complete(stop.to_owned(), after);
        }
        Some(session)
    }
}

/// Wire form: the record's own field names plus its id.
impl Serialize for MoodSession {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let doc = self.to_document();
        let mut map = serializer.serialize_map(Some(doc.len() + 1))?;
        map.serialize_entry("id", &self.id)?;
        for (k, v) in doc.fields() {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

pub fn parse_local(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, LOCAL_FORMAT).ok()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "state", content = "session")]
pub enum SessionState {
    Idle,
    Watching(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{}", ALREADY_WATCHING_MSG)]
    AlreadyWatching,
    #[error("{}", NOT_WATCHING_MSG)]
    NotWatching,
    #[error("stop time {stop} is earlier than start time {start}")]
    ClockSkew { start: String, stop: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl SessionError {
    pub fn is_state_conflict(&self) -> bool {
        matches!(self, SessionError::AlreadyWatching | SessionError::NotWatching)
    }
}

#[derive(Default)]
struct UserSlot {
    loaded: bool,
    open: Option<MoodSession>,
}

/// Session recorder over a store. Transitions for one user are serialized;
/// different users proceed independently.
pub struct SessionBook {
    store: Arc<Store>,
    zone: Tz,
    users: Mutex<HashMap<String, Arc<Mutex<UserSlot>>>>,
}

impl SessionBook {
    pub fn new(store: Arc<Store>, zone: Tz) -> Self {
        Self {
            store,
            zone,
            users: Mutex::new(HashMap::new()),
        }
    }

    pub fn zone(&self) -> Tz {
        self.zone
    }

    fn slot(&self, uid: &str) -> Arc<Mutex<UserSlot>> {
        let mut users = self.users.lock().unwrap_or_else(|e| e.into_inner());
        users.entry(uid.to_owned()).or_default().clone()
    }

    fn load(&self, uid: &str, slot: &mut UserSlot) -> Result<(), SessionError> {
        if !slot.loaded {
            slot.open = load_sessions(&self.store, uid)?
                .into_iter()
                .rev()
                .find(MoodSession::is_open);
            slot.loaded = true;
        }
        Ok(())
    }

    pub fn state(&self, uid: &str) -> Result<SessionState, SessionError> {
        let slot = self.slot(uid);
        let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
        self.load(uid, &mut slot)?;
        Ok(match &slot.open {
            Some(s) => SessionState::Watching(s.id.clone()),
            None => SessionState::Idle,
        })
    }

    // Marks the open session abandoned if it is stale at `now`.
    fn expire(&self, uid: &str, slot: &mut UserSlot, now: DateTime<Utc>) -> Result<(), SessionError> {
        let Some(open) = &slot.open else {
            return Ok(());
        };
        let now_local = now.with_timezone(&self.zone).naive_local();
        let stale = open
            .start_time()
            .is_some_and(|start| now_local - start > ABANDON_AFTER);
        if stale {
            self.store.update_fields(
                &layout::mood_record(uid, &open.id)?,
                Document::new().with(ABANDONED, true),
            )?;
            slot.open = None;
        }
        Ok(())
    }

    pub fn start(&self, uid: &str, mood: Mood, now: DateTime<Utc>) -> Result<MoodSession, SessionError> {
        let slot = self.slot(uid);
        let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
        self.load(uid, &mut slot)?;
        self.expire(uid, &mut slot, now)?;
        if slot.open.is_some() {
            return Err(SessionError::AlreadyWatching);
        }
        let session = MoodSession::open(render_local(now, self.zone), mood);
        let path = layout::mood_record(uid, &session.id)?;
        if self.store.try_get_document(&path)?.is_some() {
            return Err(SessionError::AlreadyWatching);
        }
        layout::register_user(&self.store, uid)?;
        self.store.put_document(&path, &session.to_document())?;
        slot.open = Some(session.clone());
        Ok(session)
    }

    pub fn stop(&self, uid: &str, mood: Mood, now: DateTime<Utc>) -> Result<MoodSession, SessionError> {
        let slot = self.slot(uid);
        let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
        self.load(uid, &mut slot)?;
        self.expire(uid, &mut slot, now)?;
        let Some(open) = slot.open.clone() else {
            return Err(SessionError::NotWatching);
        };
        let stop_local = render_local(now, self.zone);
        if stop_local < open.start_local {
            return Err(SessionError::ClockSkew {
                start: open.start_local,
                stop: stop_local,
            });
        }
        let mut session = open;
        session.complete(stop_local, mood);
        let completion = session.completion.as_ref().expect("just completed");
        self.store.update_fields(
            &layout::mood_record(uid, &session.id)?,
            Document::new()
                .with(AFTER_MOOD, completion.after_mood.wire_name())
                .with(STOP_TIME, completion.stop_local.as_str())
                .with(CHANGE_STATUS, completion.change_status.as_str()),
        )?;
        slot.open = None;
        Ok(session)
    }
}

/// All of a user's mood records in id (chronological) order.
pub fn load_sessions(store: &Store, uid: &str) -> Result<Vec<MoodSession>, StoreError> {
    Ok(store
        .list_collection(&layout::mood_records(uid)?)?
        .iter()
        .filter_map(|(id, doc)| MoodSession::from_document(id, doc))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_instant, parse_zone};

    fn book() -> (tempfile::TempDir, SessionBook) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path()).unwrap());
        (dir, SessionBook::new(store, parse_zone("Europe/London").unwrap()))
    }

    fn at(s: &str) -> DateTime<Utc> {
        parse_instant(s).unwrap()
    }

    #[test]
    fn change_status_examples() {
        assert_eq!(change_status(Mood::Good, Mood::Good), ChangeStatus::Same);
        assert_eq!(change_status(Mood::NotGood, Mood::Good), ChangeStatus::Better);
        assert_eq!(change_status(Mood::Okay, Mood::NotGood), ChangeStatus::Worse);
    }

    #[test]
    fn change_status_is_antisymmetric() {
        for a in Mood::ALL {
            assert_eq!(change_status(a, a), ChangeStatus::Same);
            for b in Mood::ALL {
                if a != b {
                    let mut pair = [change_status(a, b), change_status(b, a)];
                    pair.sort();
                    assert_eq!(pair, [ChangeStatus::Better, ChangeStatus::Worse]);
                }
            }
        }
    }

    #[test]
    fn mood_names() {
        assert_eq!(serde_json::to_string(&Mood::NotGood).unwrap(), "\"Not good\"");
        assert_eq!("notgood".parse::<Mood>().unwrap(), Mood::NotGood);
        assert_eq!("Not good".parse::<Mood>().unwrap(), Mood::NotGood);
        assert_eq!("okay".parse::<Mood>().unwrap(), Mood::Okay);
        assert!("meh".parse::<Mood>().is_err());
    }

    #[test]
    fn start_keys_session_by_local_time() {
        let (_d, book) = book();
        let s = book.start("u", Mood::Okay, at("2024-04-22T19:00:00Z")).unwrap();
        assert_eq!(s.id, "2024-04-22 20:00:00");
        assert!(s.is_open());
        assert_eq!(book.state("u").unwrap(), SessionState::Watching(s.id.clone()));
    }

    #[test]
    fn open_session_has_no_stop_fields() {
        let (_d, book) = book();
        let s = book.start("u", Mood::NotGood, at("2024-01-01T10:00:00Z")).unwrap();
        assert_eq!(s.before_mood, Mood::NotGood);
        let doc = s.to_document();
        assert!(!doc.contains(AFTER_MOOD) && !doc.contains(STOP_TIME) && !doc.contains(CHANGE_STATUS));
    }

    #[test]
    fn double_start_conflicts() {
        let (_d, book) = book();
        book.start("u", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        let err = book.start("u", Mood::Good, at("2024-01-01T10:05:00Z")).unwrap_err();
        assert!(matches!(err, SessionError::AlreadyWatching));
        assert_eq!(err.to_string(), "You are already watching");
    }

    #[test]
    fn stop_without_start_conflicts() {
        let (_d, book) = book();
        let err = book.stop("u", Mood::Good, at("2024-01-01T10:00:00Z")).unwrap_err();
        assert!(matches!(err, SessionError::NotWatching));
        assert_eq!(err.to_string(), "You are not watching anything");
    }

    #[test]
    fn stop_completes_the_same_record() {
        let (dir, book) = book();
        book.start("u", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        let s = book.stop("u", Mood::Good, at("2024-01-01T11:00:00Z")).unwrap();
        assert_eq!(s.change_status(), Some(ChangeStatus::Better));
        assert_eq!(book.state("u").unwrap(), SessionState::Idle);

        let store = Store::open(dir.path()).unwrap();
        let stored = load_sessions(&store, "u").unwrap();
        assert_eq!(stored, vec![s]);
    }

    #[test]
    fn stop_before_start_is_clock_skew() {
        let (_d, book) = book();
        book.start("u", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        let err = book.stop("u", Mood::Good, at("2024-01-01T09:59:59Z")).unwrap_err();
        assert!(matches!(err, SessionError::ClockSkew { .. }));
        // Still watching after a rejected stop.
        assert!(matches!(book.state("u").unwrap(), SessionState::Watching(_)));
    }

    #[test]
    fn same_second_restart_is_rejected() {
        let (_d, book) = book();
        let t = at("2024-01-01T10:00:00Z");
        book.start("u", Mood::Okay, t).unwrap();
        book.stop("u", Mood::Okay, t).unwrap();
        assert!(matches!(
            book.start("u", Mood::Okay, t),
            Err(SessionError::AlreadyWatching)
        ));
    }

    #[test]
    fn stale_sessions_are_abandoned() {
        let (dir, book) = book();
        book.start("u", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        let s2 = book.start("u", Mood::Good, at("2024-01-02T10:00:01Z")).unwrap();
        assert_eq!(book.state("u").unwrap(), SessionState::Watching(s2.id));

        book.stop("u", Mood::Good, at("2024-01-02T11:00:00Z")).unwrap();
        book.start("u", Mood::Okay, at("2024-01-05T10:00:00Z")).unwrap();
        assert!(matches!(
            book.stop("u", Mood::Good, at("2024-01-06T10:00:01Z")),
            Err(SessionError::NotWatching)
        ));

        let store = Store::open(dir.path()).unwrap();
        let all = load_sessions(&store, "u").unwrap();
        assert_eq!(all.len(), 3);
        assert!(all[0].abandoned && !all[0].is_complete());
        assert!(all[1].is_complete());
        assert!(all[2].abandoned);
    }

    #[test]
    fn state_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let zone = parse_zone("Europe/London").unwrap();
        {
            let book = SessionBook::new(Arc::new(Store::open(dir.path()).unwrap()), zone);
            book.start("u", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        }
        let book = SessionBook::new(Arc::new(Store::open(dir.path()).unwrap()), zone);
        assert!(matches!(
            book.start("u", Mood::Okay, at("2024-01-01T10:30:00Z")),
            Err(SessionError::AlreadyWatching)
        ));
        book.stop("u", Mood::NotGood, at("2024-01-01T11:00:00Z")).unwrap();
    }

    #[test]
    fn users_are_independent() {
        let (_d, book) = book();
        book.start("a", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        book.start("b", Mood::Okay, at("2024-01-01T10:00:00Z")).unwrap();
        assert!(matches!(book.stop("c", Mood::Okay, at("2024-01-01T10:00:00Z")), Err(SessionError::NotWatching)));
    }

    #[test]
    fn serialized_session_uses_record_field_names() {
        let s = MoodSession::completed("2024-04-01 09:00:00", Mood::Okay, "2024-04-01 10:00:00", Mood::NotGood);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["id"], "2024-04-01 09:00:00");
        assert_eq!(v["Before Watch Mood"], "Okay");
        assert_eq!(v["After Watch Mood"], "Not good");
        assert_eq!(v["Mood Change Status"], "Worse");
        assert_eq!(v["Stop Watch Time"], "2024-04-01 10:00:00");
    }
}
