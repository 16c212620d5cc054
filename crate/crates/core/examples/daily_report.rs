//! End to end: import watch history, record a session, build the daily
//! report with offline metadata and keyword categories.

use std::sync::Arc;

use chrono::{NaiveDate, TimeZone, Utc};
use emotrack::config::ingest_into_store;
use emotrack::ingest::DEFAULT_ZONE;
use emotrack::reportgen::{generate_report, render_table, report_to_json, CategoryPipeline};
use emotrack::{FixtureProvider, KeywordCategorizer, Mood, SessionBook, Store, TimeRange};

const DIR: &str = env!("CARGO_MANIFEST_DIR");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let zone = DEFAULT_ZONE.parse()?;
    let dir = tempfile::tempdir()?;
    let store = Arc::new(Store::open(dir.path())?);

    let takeout = std::fs::read(format!("{DIR}/fixtures/takeout_mixed.json"))?;
    let counts = ingest_into_store(&store, "alice", &takeout, zone)?;
    println!("ingested {} skipped {}", counts.ingested, counts.skipped);

    let book = SessionBook::new(Arc::clone(&store), zone);
    book.start("alice", Mood::NotGood, Utc.with_ymd_and_hms(2024, 4, 22, 19, 30, 0).unwrap())?;
    book.stop("alice", Mood::Good, Utc.with_ymd_and_hms(2024, 4, 22, 20, 10, 0).unwrap())?;

    let labeler = CategoryPipeline::new(
        FixtureProvider::load(format!("{DIR}/fixtures/metadata.tsv"))?,
        KeywordCategorizer::default(),
    );
    let range = TimeRange::new(
        NaiveDate::from_ymd_opt(2024, 4, 16).unwrap(),
        NaiveDate::from_ymd_opt(2024, 4, 22).unwrap(),
    )?;
    let report = generate_report(&store, "alice", range, zone, &labeler)?;
    print!("{}", render_table(&report));
    println!("{}", serde_json::to_string_pretty(&report_to_json(&report))?);
    Ok(())
}
