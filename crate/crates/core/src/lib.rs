//! Self-tracking of video watching and mood.
//!
//! The crate ingests Google Takeout watch-history exports, records
//! start/stop mood sessions around viewing, categorizes watched videos and
//! builds per-session and per-day reports that relate what was watched to
//! how the viewer's mood changed. Everything is stored in a small
//! file-backed document store and exposed over HTTP by [`service`].

pub mod analytics;
pub mod categorize;
pub mod config;
pub mod ingest;
pub mod layout;
pub mod metadata;
pub mod reportgen;
pub mod service;
pub mod session;
pub mod store;

pub use categorize::{CategoryLabel, Categorizer, KeywordCategorizer};
pub use ingest::{RawTakeoutEntry, WatchEvent};
pub use metadata::{FixtureProvider, MetadataProvider, VideoMetadata};
pub use reportgen::{DailySummary, Report, SessionDetail, TimeRange};
pub use session::{ChangeStatus, Mood, MoodSession, SessionBook};
pub use store::{Document, DocumentPath, Store};
