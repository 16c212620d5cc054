//! Usage statistics over watch events and mood sessions, and System
//! Usability Scale scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use chrono::{NaiveDate, Timelike};
use serde::Serialize;

use crate::ingest::WatchEvent;
use crate::reportgen::{session_date, TimeRange};
use crate::session::{parse_local, ChangeStatus, Mood, MoodSession};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("days watched must be between 0 and 7, got {0}")]
    DaysOutOfRange(u32),
    #[error("no completed sessions")]
    EmptyInput,
    #[error("invalid SUS response (row {row}): {message}")]
    InvalidResponse { row: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum FrequencyClass {
    EveryWeek,
    SeveralTimesAWeek,
    EveryDay,
}

/// Watch days per week to a frequency class: 5 or more is every day,
/// 2 or fewer every week, 3 to 4 several times a week.
pub fn frequency_class(days_watched: u32) -> Result<FrequencyClass, AnalyticsError> {
    match days_watched {
        5..=7 => Ok(FrequencyClass::EveryDay),
        3..=4 => Ok(FrequencyClass::SeveralTimesAWeek),
        0..=2 => Ok(FrequencyClass::EveryWeek),
        n => Err(AnalyticsError::DaysOutOfRange(n)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DayPeriod {
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl DayPeriod {
    pub const ALL: [DayPeriod; 4] = [
        DayPeriod::Morning,
        DayPeriod::Afternoon,
        DayPeriod::Evening,
        DayPeriod::Night,
    ];

    pub fn of_hour(hour: u32) -> Self {
        match hour {
            0..=5 => DayPeriod::Night,
            6..=11 => DayPeriod::Morning,
            12..=17 => DayPeriod::Afternoon,
            _ => DayPeriod::Evening,
        }
    }
}

fn local_hour(event: &WatchEvent) -> Option<u32> {
    parse_local(&event.watched_at_local).map(|t| t.hour())
}

fn local_date(event: &WatchEvent) -> Option<NaiveDate> {
    parse_local(&event.watched_at_local).map(|t| t.date())
}

/// Events per period of the (local) day. Every period is present.
pub fn period_histogram(events: &[WatchEvent]) -> BTreeMap<DayPeriod, usize> {
    let mut hist: BTreeMap<DayPeriod, usize> = DayPeriod::ALL.iter().map(|p| (*p, 0)).collect();
    for hour in events.iter().filter_map(local_hour) {
        *hist.entry(DayPeriod::of_hour(hour)).or_default() += 1;
    }
    hist
}

/// `(short, long)` counts.
pub fn long_short_split(events: &[WatchEvent]) -> (usize, usize) {
    let short = events.iter().filter(|e| e.is_short).count();
    (short, events.len() - short)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StatusShares {
    pub better: f64,
    pub same: f64,
    pub worse: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MoodShares {
    pub good: f64,
    pub okay: f64,
    pub not_good: f64,
}

pub fn mood_change_distribution(sessions: &[MoodSession]) -> Result<StatusShares, AnalyticsError> {
    let statuses: Vec<ChangeStatus> = sessions
        .iter()
        .filter(|s| !s.abandoned)
        .filter_map(MoodSession::change_status)
        .collect();
    if statuses.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let n = statuses.len() as f64;
    let share = |s| statuses.iter().filter(|x| **x == s).count() as f64 / n;
    Ok(StatusShares {
        better: share(ChangeStatus::Better),
        same: share(ChangeStatus::Same),
        worse: share(ChangeStatus::Worse),
    })
}

/// Before-mood shares over completed sessions.
pub fn start_mood_distribution(sessions: &[MoodSession]) -> Result<MoodShares, AnalyticsError> {
    let moods: Vec<Mood> = sessions
        .iter()
        .filter(|s| s.is_complete() && !s.abandoned)
        .map(|s| s.before_mood)
        .collect();
    if moods.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let n = moods.len() as f64;
    let share = |m| moods.iter().filter(|x| **x == m).count() as f64 / n;
    Ok(MoodShares {
        good: share(Mood::Good),
        okay: share(Mood::Okay),
        not_good: share(Mood::NotGood),
    })
}

/// Rounded percentage for display.
pub fn percent(fraction: f64) -> i64 {
    (fraction * 100.0).round() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UsageClass {
    Light,
    Moderate,
    Heavy,
}

/// Under an hour a day is light, one to three hours moderate, above three
/// heavy. Lower bounds are inclusive.
pub fn daily_usage_class(minutes_per_day: f64) -> UsageClass {
    if minutes_per_day < 60.0 {
        UsageClass::Light
    } else if minutes_per_day <= 180.0 {
        UsageClass::Moderate
    } else {
        UsageClass::Heavy
    }
}

/// Mean session minutes per day that had at least one completed session.
pub fn daily_watch_minutes(sessions: &[MoodSession]) -> Option<f64> {
    let mut per_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for s in sessions.iter().filter(|s| s.is_complete() && !s.abandoned) {
        let (Some(start), Some(stop)) = (s.start_time(), s.stop_local().and_then(parse_local)) else {
            continue;
        };
        let minutes = (stop - start).num_seconds().max(0) as f64 / 60.0;
        *per_day.entry(start.date()).or_default() += minutes;
    }
    if per_day.is_empty() {
        return None;
    }
    Some(per_day.values().sum::<f64>() / per_day.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UsageStats {
    pub days_watched: u32,
    pub frequency_class: FrequencyClass,
    pub period_histogram: BTreeMap<DayPeriod, usize>,
    pub short_count: usize,
    pub long_count: usize,
    pub mood_change_dist: Option<StatusShares>,
    pub start_mood_dist: Option<MoodShares>,
    pub minutes_per_day: Option<f64>,
    pub usage_class: Option<UsageClass>,
}

/// Statistics for events and sessions dated inside `range`. Ranges longer
/// than a week have their watch days scaled to a seven-day week.
pub fn usage_stats(range: TimeRange, events: &[WatchEvent], sessions: &[MoodSession]) -> UsageStats {
    let events: Vec<WatchEvent> = events
        .iter()
        .filter(|e| local_date(e).is_some_and(|d| range.contains(d)))
        .cloned()
        .collect();
    let sessions: Vec<MoodSession> = sessions
        .iter()
        .filter(|s| session_date(s).is_some_and(|d| range.contains(d)))
        .cloned()
        .collect();

    let distinct: BTreeSet<NaiveDate> = events.iter().filter_map(local_date).collect();
    let days = range.days();
    let days_watched = if days <= 7 {
        distinct.len() as u32
    } else {
        ((distinct.len() as f64 * 7.0 / days as f64).round() as u32).min(7)
    };
    let (short_count, long_count) = long_short_split(&events);
    let minutes_per_day = daily_watch_minutes(&sessions);
    UsageStats {
        days_watched,
        frequency_class: frequency_class(days_watched).expect("clamped to a week"),
        period_histogram: period_histogram(&events),
        short_count,
        long_count,
        mood_change_dist: mood_change_distribution(&sessions).ok(),
        start_mood_dist: start_mood_distribution(&sessions).ok(),
        minutes_per_day,
        usage_class: minutes_per_day.map(daily_usage_class),
    }
}

/// Aligned text rendering; fractions shown as whole percentages.
pub fn render_stats_table(stats: &UsageStats) -> String {
    let mut out = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(out, "{k:<22} {v}");
    };
    row("Days watched", stats.days_watched.to_string());
    row("Frequency", format!("{:?}", stats.frequency_class));
    for (p, n) in &stats.period_histogram {
        row(&format!("{p:?}"), n.to_string());
    }
    row("Short videos", stats.short_count.to_string());
    row("Long videos", stats.long_count.to_string());
    match stats.mood_change_dist {
        Some(d) => row(
            "Mood change",
            format!(
                "Better {}%  Same {}%  Worse {}%",
                percent(d.better),
                percent(d.same),
                percent(d.worse)
            ),
        ),
        None => row("Mood change", "-".into()),
    }
    match stats.start_mood_dist {
        Some(d) => row(
            "Start mood",
            format!(
                "Good {}%  Okay {}%  Not good {}%",
                percent(d.good),
                percent(d.okay),
                percent(d.not_good)
            ),
        ),
        None => row("Start mood", "-".into()),
    }
    match (stats.minutes_per_day, stats.usage_class) {
        (Some(m), Some(c)) => row("Minutes per day", format!("{m:.1} ({c:?})")),
        _ => row("Minutes per day", "-".into()),
    }
    out
}

/// One questionnaire: ten answers on a 1..=5 scale, standard item order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SusResponse {
    answers: [u8; 10],
}

impl SusResponse {
    pub fn new(answers: &[u8]) -> Result<Self, AnalyticsError> {
        let answers: [u8; 10] = answers
            .try_into()
            .map_err(|_| AnalyticsError::InvalidResponse {
                row: 0,
                message: format!("expected 10 answers, got {}", answers.len()),
            })?;
        if let Some(bad) = answers.iter().find(|a| !(1..=5).contains(*a)) {
            return Err(AnalyticsError::InvalidResponse {
                row: 0,
                message: format!("answer {bad} outside 1..=5"),
            });
        }
        Ok(Self { answers })
    }

    pub fn answers(&self) -> &[u8; 10] {
        &self.answers
    }

    /// Odd items add `answer - 1`, even items `5 - answer`; the sum is
    /// scaled by 2.5 onto 0..=100.
    pub fn score(&self) -> f64 {
        let raw: u32 = self
            .answers
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if i % 2 == 0 {
                    u32::from(a) - 1
                } else {
                    5 - u32::from(a)
                }
            })
            .sum();
        f64::from(raw) * 2.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SusScores {
    pub per_respondent: Vec<f64>,
    pub mean: f64,
}

pub fn sus_score(responses: &[SusResponse]) -> Result<SusScores, AnalyticsError> {
    if responses.is_empty() {
        return Err(AnalyticsError::InvalidResponse {
            row: 0,
            message: "no responses".into(),
        });
    }
    let per_respondent: Vec<f64> = responses.iter().map(SusResponse::score).collect();
    let mean = per_respondent.iter().sum::<f64>() / per_respondent.len() as f64;
    Ok(SusScores {
        per_respondent,
        mean,
    })
}

/// Reads SUS answers as CSV: one respondent per row, ten integer columns,
/// optional header row. Rows are numbered from 1 in errors.
pub fn read_sus_csv<R: Read>(reader: R) -> Result<Vec<SusResponse>, AnalyticsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| AnalyticsError::InvalidResponse {
            row,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<u8>, _> = record.iter().map(str::parse::<u8>).collect();
        let answers = match parsed {
            Ok(a) => a,
            // A first row that is not numeric is a header.
            Err(_) if row == 1 && record.iter().any(|f| f.parse::<f64>().is_err()) => continue,
            Err(_) => {
                return Err(AnalyticsError::InvalidResponse {
                    row,
                    message: format!("non-integer answer in {:?}", record.iter().collect::<Vec<_>>()),
                })
            }
        };
        let response = SusResponse::new(&answers).map_err(|e| match e {
            AnalyticsError::InvalidResponse { message, .. } => AnalyticsError::InvalidResponse { row, message },
            other => other,
        })?;
        out.push(response);
    }
    Ok(out)
}
