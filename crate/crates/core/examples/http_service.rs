//! Run the HTTP service on an ephemeral port and drive it with a blocking
//! client: upload, import, sessions, report. Ctrl-C is not needed; the
//! server stops once the walkthrough is done.

use std::sync::Arc;

use emotrack::reportgen::CategoryPipeline;
use emotrack::service::{self, AppState, ServiceConfig};
use emotrack::{FixtureProvider, KeywordCategorizer};
use serde_json::{json, Value};

const DIR: &str = env!("CARGO_MANIFEST_DIR");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = tempfile::tempdir()?;
    let labeler = Arc::new(CategoryPipeline::new(
        FixtureProvider::load(format!("{DIR}/fixtures/metadata.tsv"))?,
        KeywordCategorizer::default(),
    ));
    let mut config = ServiceConfig::new(data.path());
    config.allow_origin = Some("http://localhost:3000".into());
    let state = Arc::new(AppState::new(config, labeler, service::system_clock())?);

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = runtime.spawn(service::serve(listener, service::router(state), async {
        let _ = stop_rx.await;
    }));
    println!("serving on {base}");

    let client = reqwest::blocking::Client::new();
    let post = |path: &str, body: Value| -> reqwest::Result<Value> {
        client.post(format!("{base}{path}")).json(&body).send()?.json()
    };

    let takeout = std::fs::read(format!("{DIR}/fixtures/takeout_missing_url.json"))?;
    let form = reqwest::blocking::multipart::Form::new()
        .text("uid", "alice")
        .part("file", reqwest::blocking::multipart::Part::bytes(takeout).file_name("watch-history.json"));
    let uploaded: Value = client.post(format!("{base}/api/upload")).multipart(form).send()?.json()?;
    println!("upload      {uploaded}");
    let name = uploaded["data"]["fileName"].clone();

    println!("handle_file {}", post("/api/handle_file", json!({"uid": "alice", "uploadOk": true, "fileName": name}))?);
    println!("start       {}", post("/api/session/start", json!({"uid": "alice", "mood": "Okay"}))?);
    println!("start again {}", post("/api/session/start", json!({"uid": "alice", "mood": "Okay"}))?);
    println!("stop        {}", post("/api/session/stop", json!({"uid": "alice", "mood": "Good"}))?);
    let today = chrono::Utc::now().date_naive().to_string();
    println!("handle_data {}", post("/api/handle_data", json!({"uid": "alice", "start": today, "end": today}))?);

    let _ = stop_tx.send(());
    runtime.block_on(server)??;
    Ok(())
}
