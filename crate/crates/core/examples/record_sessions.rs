//! Start and stop mood sessions against a throwaway store, including the
//! two refusals a user can run into.

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use emotrack::ingest::DEFAULT_ZONE;
use emotrack::session::{load_sessions, Mood, SessionBook};
use emotrack::Store;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Arc::new(Store::open(dir.path())?);
    let book = SessionBook::new(Arc::clone(&store), DEFAULT_ZONE.parse()?);
    let at = |h, m| Utc.with_ymd_and_hms(2024, 4, 22, h, m, 0).unwrap();

    book.start("alice", Mood::NotGood, at(19, 30))?;
    if let Err(e) = book.start("alice", Mood::Okay, at(19, 40)) {
        println!("second start refused: {e}");
    }
    println!("state: {:?}", book.state("alice")?);
    let done = book.stop("alice", Mood::Good, at(20, 15))?;
    println!("{} -> {:?}", done.start_local, done.change_status());
    if let Err(e) = book.stop("alice", Mood::Good, at(20, 16)) {
        println!("second stop refused: {e}");
    }

    for s in load_sessions(&store, "alice")? {
        println!("{}", serde_json::to_string(&s)?);
    }
    Ok(())
}
