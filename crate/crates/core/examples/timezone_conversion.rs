//! UTC instants rendered as local wall-clock time, across both DST edges.
//!
//! cargo run --example timezone_conversion -- 2024-04-22T19:30:00Z America/New_York

use emotrack::ingest::{convert_time, DEFAULT_ZONE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    if let Some(instant) = args.next() {
        let zone = args.next().unwrap_or_else(|| DEFAULT_ZONE.to_owned());
        println!("{}", convert_time(&instant, &zone)?);
        return Ok(());
    }
    for instant in [
        "2024-04-22T19:30:00Z",
        "2024-03-31T00:59:59Z",
        "2024-03-31T01:00:00Z",
        "2024-10-27T00:59:59Z",
        "2024-10-27T01:00:00Z",
        "2024-04-22T19:30:00.250+02:00",
    ] {
        println!("{instant:<32} {DEFAULT_ZONE}: {}", convert_time(instant, DEFAULT_ZONE)?);
    }
    match convert_time("2024-04-22 19:30", DEFAULT_ZONE) {
        Ok(t) => println!("unexpected: {t}"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
