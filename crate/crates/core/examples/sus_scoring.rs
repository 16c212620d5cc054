//! System Usability Scale scores from a CSV of answers.
//!
//! cargo run --example sus_scoring [answers.csv]

use emotrack::analytics::{read_sus_csv, sus_score, SusResponse};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sus.csv").into());
    let responses = read_sus_csv(std::fs::File::open(path)?)?;
    let scores = sus_score(&responses)?;
    for (r, s) in responses.iter().zip(&scores.per_respondent) {
        println!("{:?} -> {s:.1}", r.answers());
    }
    println!("mean {:.1}", scores.mean);

    // Neutral answers land exactly in the middle of the scale.
    println!("all 3s -> {}", SusResponse::new(&[3; 10])?.score());
    Ok(())
}
