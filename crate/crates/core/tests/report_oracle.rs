//! Report building against a brute-force recount.

mod common;

use common::*;
use emotrack::reportgen::{build_report, build_summary, generate_report};
use emotrack::session::ChangeStatus;
use emotrack::{Store, TimeRange};
use rand::rngs::StdRng;
use rand::SeedableRng;

#[test]
fn thousand_random_fixtures_match_the_oracle() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let labeler = fixture_labeler();
    for case in 0..1000 {
        let f = random_fixture(&mut rng);
        let range = random_range(&mut rng, &f);
        let got = flatten(&build_report(range, &f.events, &f.sessions, &labeler).unwrap());
        let want = oracle_report(range, &f.events, &f.sessions);
        assert_eq!(got, want, "case {case}: {f:#?}");
    }
}

#[test]
fn every_report_conserves_counts() {
    let mut rng = StdRng::seed_from_u64(7);
    let labeler = fixture_labeler();
    for _ in 0..300 {
        let f = random_fixture(&mut rng);
        let range = random_range(&mut rng, &f);
        for (date, day) in build_report(range, &f.events, &f.sessions, &labeler).unwrap() {
            assert!(range.contains(date));
            assert!(!day.details.is_empty());
            let s = &day.summary;
            assert_eq!(s.total_videos, day.details.iter().map(|d| d.video_count).sum::<usize>());
            assert_eq!(s.better + s.same + s.worse, day.details.len());
            for d in &day.details {
                assert_eq!(d.video_count, d.category_counts.values().sum::<usize>());
            }
            assert_eq!(build_summary(date, &day.details), *s);
        }
    }
}

#[test]
fn enlarging_the_range_never_loses_counts() {
    let mut rng = StdRng::seed_from_u64(99);
    let labeler = fixture_labeler();
    for _ in 0..300 {
        let f = random_fixture(&mut rng);
        let inner = random_range(&mut rng, &f);
        let outer = TimeRange::new(inner.start() - chrono::Duration::days(2), inner.end() + chrono::Duration::days(2)).unwrap();
        let small = flatten(&build_report(inner, &f.events, &f.sessions, &labeler).unwrap());
        let big = flatten(&build_report(outer, &f.events, &f.sessions, &labeler).unwrap());
        for (date, day) in &small {
            assert_eq!(big.get(date), Some(day));
        }
    }
}

#[test]
fn events_outside_windows_count_nowhere() {
    let mut rng = StdRng::seed_from_u64(3);
    let labeler = fixture_labeler();
    for _ in 0..200 {
        let f = random_fixture(&mut rng);
        let range = TimeRange::new(f.first_date, f.first_date + chrono::Duration::days(f.dates)).unwrap();
        let report = build_report(range, &f.events, &f.sessions, &labeler).unwrap();
        let counted: usize = report.values().map(|d| d.summary.total_videos).sum();
        let inside = f
            .events
            .iter()
            .filter(|e| {
                f.sessions.iter().any(|s| {
                    s.is_complete()
                        && s.start_local.as_str() <= e.watched_at_local.as_str()
                        && e.watched_at_local.as_str() <= s.stop_local().unwrap()
                })
            })
            .count();
        // Non-overlapping windows: each event lands in at most one detail.
        assert_eq!(counted, inside);
    }
}

#[test]
fn worked_examples() {
    let labeler = fixture_labeler();
    let day = date(2024, 4, 22);
    let range = TimeRange::new(day, day).unwrap();

    use ChangeStatus::*;
    let (sessions, events) = worked_day(&[10, 14, 20], &[Better, Better, Same], &[1, 2, 0]);
    let r = build_report(range, &events, &sessions, &labeler).unwrap();
    let s = &r[&day].summary;
    assert_eq!((s.better, s.same, s.worse), (2, 1, 0));

    let (sessions, events) = worked_day(&[9, 12, 19, 23], &[Better, Better, Same, Worse], &[3, 1, 4, 2]);
    let r = build_report(range, &events, &sessions, &labeler).unwrap();
    let s = &r[&day].summary;
    assert_eq!((s.better, s.same, s.worse, s.total_videos), (2, 1, 1, 10));
    assert_eq!(r[&day].details.len(), 4);
}

#[test]
fn generated_reports_replace_stale_dates() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let labeler = fixture_labeler();
    let zone = "Europe/London".parse().unwrap();
    let day = date(2024, 4, 22);
    let range = TimeRange::new(day, day).unwrap();
    let stale = emotrack::layout::report_summary("u", day).unwrap();
    store
        .put_document(&stale, &emotrack::Document::new().with("Better", 9i64))
        .unwrap();
    emotrack::layout::register_user(&store, "u").unwrap();
    let report = generate_report(&store, "u", range, zone, &labeler).unwrap();
    assert!(report.is_empty());
    assert!(store.try_get_document(&stale).unwrap().is_none());
}
