//! Parse a Takeout export and show what was kept and what was skipped.
//!
//! cargo run --example ingest_takeout [path/to/watch-history.json]

use emotrack::ingest::{ingest_bytes, DEFAULT_ZONE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/takeout_mixed.json").into());
    let zone = DEFAULT_ZONE.parse()?;
    let outcome = ingest_bytes(&std::fs::read(&path)?, zone)?;

    for e in &outcome.events {
        let kind = if e.is_short { "short" } else { "video" };
        println!("{}  {:<5} {}  ({})", e.watched_at_local, kind, e.video_id, e.url);
    }
    for (index, reason) in &outcome.skipped {
        println!("skipped entry {index}: {reason}");
    }
    let counts = outcome.counts();
    println!("ingested {}, skipped {}", counts.ingested, counts.skipped);
    Ok(())
}
