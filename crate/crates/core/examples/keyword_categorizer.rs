//! Offline categories: keyword scores, the final label, and how raw model
//! output is cleaned up.
//!
//! cargo run --example keyword_categorizer -- "video title" ["description"]

use emotrack::categorize::{build_prompt, sanitize_category};
use emotrack::KeywordCategorizer;

fn main() {
    let mut args = std::env::args().skip(1);
    let keywords = KeywordCategorizer::default();
    let samples: Vec<(String, String)> = match args.next() {
        Some(title) => vec![(title, args.next().unwrap_or_default())],
        None => [
            ("Lo-fi beats to study to", "relaxing music playlist"),
            ("NBA Finals game 7 highlights", ""),
            ("funny car compilation", "supercars and crashes"),
            ("Cooking pasta at home", "an easy recipe"),
            ("untitled", ""),
        ]
        .iter()
        .map(|(t, d)| (t.to_string(), d.to_string()))
        .collect(),
    };

    for (title, description) in &samples {
        let hits: Vec<String> = keywords
            .scores(title, description)
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(c, n)| format!("{}={n}", c.as_str()))
            .collect();
        println!("{:<32} -> {:<16} [{}]", title, keywords.classify(title, description).as_str(), hits.join(" "));
    }

    println!("\nprompt sent to a language model:\n{}", build_prompt("NBA Finals game 7", ""));
    for raw in ["Sport.", " Music\n", "I think it's Gaming", "People & Blogs", ""] {
        println!("{raw:?} -> {}", sanitize_category(raw).as_str());
    }
}
