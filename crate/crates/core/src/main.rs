//! `emotrack` command line.
//!
//! Exit codes: 0 success, 1 storage or upstream failure, 2 bad usage or
//! input, 3 session state conflict.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{DateTime, Local, NaiveDate, Utc};
use chrono_tz::Tz;
use clap::{Args, Parser, Subcommand, ValueEnum};

use emotrack::analytics::{read_sus_csv, render_stats_table, sus_score, usage_stats};
use emotrack::config::{ingest_into_store, CategorizerMode, IngestStoreError, MetadataMode, PipelineConfig};
use emotrack::ingest::{parse_instant, parse_zone, DEFAULT_ZONE};
use emotrack::reportgen::{
    generate_report, load_events, render_table, report_to_json, resolve_range, Preset, RangeSpec, ReportError,
    TimeRange,
};
use emotrack::service::{self, AppState, ServiceConfig};
use emotrack::session::{load_sessions, Mood, SessionBook, SessionError};
use emotrack::store::Store;

#[derive(Parser)]
#[command(name = "emotrack", version, about = "Mood-aware viewing history tracker")]
struct Cli {
    /// Directory holding the document store and uploads.
    #[arg(long, global = true, env = "EMOTRACK_DATA_DIR", default_value = "emotrack-data")]
    data_dir: PathBuf,

    /// IANA zone used for local times.
    #[arg(long, global = true, default_value = DEFAULT_ZONE)]
    zone: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a Takeout `watch-history.json`.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        user: String,
    },
    /// Start or stop a mood session.
    Session {
        #[command(subcommand)]
        action: SessionAction,
    },
    /// Build (and store) the daily mood/viewing report.
    Report {
        #[arg(long)]
        user: String,
        #[arg(long, value_enum, conflicts_with_all = ["from", "to"])]
        preset: Option<PresetArg>,
        #[arg(long, requires = "to")]
        from: Option<NaiveDate>,
        #[arg(long, requires = "from")]
        to: Option<NaiveDate>,
        /// Reference date for presets; defaults to the local date.
        #[arg(long)]
        today: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Viewing statistics over a date range.
    Stats {
        #[arg(long)]
        user: String,
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        to: NaiveDate,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Score a CSV of SUS questionnaire answers.
    Sus {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Browser origin allowed to make credentialed requests.
        #[arg(long)]
        allow_origin: Option<String>,
        /// Require `Authorization: Bearer <token>` on API calls.
        #[arg(long, env = "EMOTRACK_TOKEN")]
        token: Option<String>,
        #[arg(long, default_value_t = service::DEFAULT_UPLOAD_LIMIT)]
        upload_limit: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Subcommand)]
enum SessionAction {
    Start(SessionArgs),
    Stop(SessionArgs),
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    user: String,
    /// good, okay or notgood
    #[arg(long)]
    mood: Mood,
    /// Instant to record instead of now (RFC 3339).
    #[arg(long)]
    at: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    #[value(name = "lastweek")]
    LastWeek,
    #[value(name = "lastmonth")]
    LastMonth,
    #[value(name = "last3months")]
    LastThreeMonths,
    #[value(name = "halfyear")]
    HalfYear,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::LastWeek => Preset::LastWeek,
            PresetArg::LastMonth => Preset::LastMonth,
            PresetArg::LastThreeMonths => Preset::LastThreeMonths,
            PresetArg::HalfYear => Preset::LastHalfYear,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value_t = CategorizerMode::Keyword)]
    categorizer: CategorizerMode,
    #[arg(long = "metadata", value_enum, default_value_t = MetadataMode::Fixture)]
    metadata: MetadataMode,
    /// Video metadata table used by the fixture provider.
    #[arg(long, env = "EMOTRACK_METADATA_FIXTURE")]
    metadata_fixture: Option<PathBuf>,
    /// Replacement keyword table for the keyword categorizer.
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long, env = "YOUTUBE_API_KEY", hide_env_values = true)]
    youtube_api_key: Option<String>,
    #[arg(long)]
    youtube_base_url: Option<String>,
    #[arg(long, env = "OPENAI_API_KEY", hide_env_values = true)]
    llm_api_key: Option<String>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long, default_value_t = 3)]
    upstream_attempts: usize,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            categorizer: self.categorizer,
            metadata: self.metadata,
            fixture_path: self.metadata_fixture.clone(),
            keywords_path: self.keywords.clone(),
            youtube_api_key: self.youtube_api_key.clone(),
            youtube_base_url: self.youtube_base_url.clone(),
            llm_api_key: self.llm_api_key.clone(),
            llm_endpoint: self.llm_endpoint.clone(),
            llm_model: self.llm_model.clone(),
            llm_temperature: None,
            upstream_attempts: self.upstream_attempts,
        }
    }
}

/// Error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Self { code: 1, message: message.to_string() }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = if e.is_state_conflict() { 3 } else { 1 };
        Self { code, message: e.to_string() }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidRange { .. } | ReportError::IncompleteSession(_) => Failure::input(e),
            _ => Failure::runtime(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open_store(data_dir: &std::path::Path) -> Result<Arc<Store>, Failure> {
    let cfg = ServiceConfig::new(data_dir);
    Store::open(cfg.store_dir()).map(Arc::new).map_err(Failure::runtime)
}

fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

fn print_json(value: &impl serde::Serialize) {
    print(&format!("{}\n", serde_json::to_string_pretty(value).expect("serializable")));
}

fn run(cli: Cli) -> Result<(), Failure> {
    let zone: Tz = parse_zone(&cli.zone).map_err(Failure::input)?;
    match cli.command {
        Command::Ingest { file, user } => {
            let content = std::fs::read(&file).map_err(|e| Failure::input(format!("{}: {e}", file.display())))?;
            let store = open_store(&cli.data_dir)?;
            let counts = ingest_into_store(&store, &user, &content, zone).map_err(|e| match e {
                IngestStoreError::Parse(p) => Failure::input(p),
                IngestStoreError::Store(s) => Failure::input_or_runtime(s),
            })?;
            print_json(&counts);
        }
        Command::Session { action } => {
            let (args, starting) = match action {
                SessionAction::Start(a) => (a, true),
                SessionAction::Stop(a) => (a, false),
            };
            let now: DateTime<Utc> = match &args.at {
                Some(at) => parse_instant(at).map_err(Failure::input)?,
                None => Utc::now(),
            };
            let book = SessionBook::new(open_store(&cli.data_dir)?, zone);
            let session = if starting {
                book.start(&args.user, args.mood, now)?
            } else {
                book.stop(&args.user, args.mood, now)?
            };
            print_json(&session);
        }
        Command::Report { user, preset, from, to, today, format, pipeline } => {
            let spec = match (preset, from, to) {
                (Some(p), _, _) => RangeSpec::Preset(p.into()),
                (None, Some(f), Some(t)) => RangeSpec::Custom(f, t),
                _ => return Err(Failure::input("give --preset or both --from and --to")),
            };
            let today = today.unwrap_or_else(|| Utc::now().with_timezone(&zone).date_naive());
            let range = resolve_range(spec, today)?;
            let labeler = pipeline.config().build_labeler().map_err(Failure::input)?;
            let store = open_store(&cli.data_dir)?;
            let report = generate_report(&store, &user, range, zone, labeler.as_ref())?;
            match format {
                Format::Json => print_json(&report_to_json(&report)),
                Format::Table => print(&render_table(&report)),
            }
        }
        Command::Stats { user, from, to, format } => {
            let range = TimeRange::new(from, to).map_err(Failure::input)?;
            let store = open_store(&cli.data_dir)?;
            let events = load_events(&store, &user, zone).map_err(Failure::runtime)?;
            let sessions = load_sessions(&store, &user).map_err(Failure::runtime)?;
            let stats = usage_stats(range, &events, &sessions);
            match format {
                Format::Json => print_json(&stats),
                Format::Table => print(&render_stats_table(&stats)),
            }
        }
        Command::Sus { csv, format } => {
            let file = std::fs::File::open(&csv).map_err(|e| Failure::input(format!("{}: {e}", csv.display())))?;
            let responses = read_sus_csv(file).map_err(Failure::input)?;
            let scores = sus_score(&responses).map_err(Failure::input)?;
            match format {
                Format::Json => print_json(&scores),
                Format::Table => {
                    let mut out = String::new();
                    for (i, s) in scores.per_respondent.iter().enumerate() {
                        out.push_str(&format!("respondent {:<4} {s:.1}\n", i + 1));
                    }
                    out.push_str(&format!("mean           {:.1}\n", scores.mean));
                    print(&out);
                }
            }
        }
        Command::Serve { port, host, allow_origin, token, upload_limit, pipeline } => {
            let labeler = pipeline.config().build_labeler().map_err(Failure::input)?;
            let mut config = ServiceConfig::new(&cli.data_dir);
            config.allow_origin = allow_origin;
            config.zone = zone;
            config.token = token;
            config.upload_limit = upload_limit;
            let state = AppState::new(config, labeler, service::system_clock()).map_err(Failure::runtime)?;
            let runtime = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| Failure::input(format!("cannot listen on {host}:{port}: {e}")))?;
                if let Ok(addr) = listener.local_addr() {
                    eprintln!("listening on http://{addr} ({})", Local::now().format("%H:%M:%S"));
                }
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                service::serve(listener, service::router(Arc::new(state)), shutdown)
                    .await
                    .map_err(Failure::runtime)
            })?;
        }
    }
    Ok(())
}

impl Failure {
    fn input_or_runtime(e: emotrack::store::StoreError) -> Self {
        match e {
            emotrack::store::StoreError::InvalidPath { .. } => Failure::input(e),
            other => Failure::runtime(other),
        }
    }
}
