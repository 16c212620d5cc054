//! Viewing statistics over a date range plus the mood-change shares.

use chrono::NaiveDate;
use emotrack::analytics::{mood_change_distribution, percent, render_stats_table, usage_stats};
use emotrack::ingest::{ingest_bytes, DEFAULT_ZONE};
use emotrack::{Mood, MoodSession, TimeRange};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let zone = DEFAULT_ZONE.parse()?;
    let takeout = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/takeout_mixed.json"))?;
    let events = ingest_bytes(&takeout, zone)?.events;

    // Thirteen sessions: 8 better, 4 unchanged, 1 worse.
    let mut sessions = Vec::new();
    for i in 0..13 {
        let (before, after) = match i {
            0..=7 => (Mood::NotGood, Mood::Good),
            8..=11 => (Mood::Okay, Mood::Okay),
            _ => (Mood::Good, Mood::NotGood),
        };
        let day = 10 + i;
        sessions.push(MoodSession::completed(
            format!("2024-04-{day:02} 20:00:00"),
            before,
            format!("2024-04-{day:02} 20:45:00"),
            after,
        ));
    }

    let shares = mood_change_distribution(&sessions)?;
    println!(
        "better {:.1}%  same {:.1}%  worse {:.1}%  (rounded: {}/{}/{})",
        shares.better * 100.0,
        shares.same * 100.0,
        shares.worse * 100.0,
        percent(shares.better),
        percent(shares.same),
        percent(shares.worse)
    );

    let range = TimeRange::new(
        NaiveDate::from_ymd_opt(2024, 4, 1).unwrap(),
        NaiveDate::from_ymd_opt(2024, 4, 30).unwrap(),
    )?;
    print!("{}", render_stats_table(&usage_stats(range, &events, &sessions)));
    Ok(())
}
