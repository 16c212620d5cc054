//! Collection names and document paths used by the app.

use chrono::NaiveDate;

use crate::store::{Document, DocumentPath, Result, Store};

pub const USERS: &str = "Users";
pub const MOOD_RECORDS: &str = "Mood Records";
pub const WATCH_HISTORY: &str = "YouTube Watch History";
pub const ANALYSIS_REPORT: &str = "Analysis Report";
pub const DETAILS: &str = "Details";
pub const SUMMARY: &str = "Summary";

pub fn user(uid: &str) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid])
}

pub fn mood_records(uid: &str) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid, MOOD_RECORDS])
}

pub fn mood_record(uid: &str, session_id: &str) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid, MOOD_RECORDS, session_id])
}

pub fn watch_history(uid: &str) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid, WATCH_HISTORY])
}

pub fn analysis_reports(uid: &str) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid, ANALYSIS_REPORT])
}

pub fn report_date(uid: &str, date: NaiveDate) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid, ANALYSIS_REPORT, &date_key(date)])
}

pub fn report_details(uid: &str, date: NaiveDate) -> Result<DocumentPath> {
    DocumentPath::new([USERS, uid, ANALYSIS_REPORT, &date_key(date), DETAILS])
}

pub fn report_summary(uid: &str, date: NaiveDate) -> Result<DocumentPath> {
    let key = date_key(date);
    DocumentPath::new([USERS, uid, ANALYSIS_REPORT, &key, SUMMARY, &key])
}

pub fn date_key(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

/// Records `uid` as a known user. Existing user documents are left as is.
pub fn register_user(store: &Store, uid: &str) -> Result<()> {
    let path = user(uid)?;
    if store.try_get_document(&path)?.is_none() {
        store.put_document(&path, &Document::new().with("uid", uid))?;
    }
    Ok(())
}

pub fn user_exists(store: &Store, uid: &str) -> Result<bool> {
    Ok(store.try_get_document(&user(uid)?)?.is_some())
}
