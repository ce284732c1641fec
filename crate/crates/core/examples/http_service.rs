//! Starts the HTTP service on an ephemeral port and exercises it with a
//! plain blocking client.

use std::sync::Arc;

use iotase::config::Config;
use iotase::engine::Engine;
use iotase::server;
use serde_json::{json, Value};

fn main() -> anyhow::Result<()> {
    let engine = Arc::new(Engine::open(Config::default())?);
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    rt.spawn(async move { axum::serve(listener, server::router(engine)).await });

    let client = reqwest::blocking::Client::new();
    let health: Value = client.get(format!("{base}/health")).send()?.json()?;
    println!("health: {health}");

    let body = json!({ "session_id": "demo", "query": "I need a walk-in clinic with a short lineup near my location",
                       "origin": { "lat": 43.679, "lon": -79.406 } });
    let resp: Value = client.post(format!("{base}/query")).json(&body).send()?.json()?;
    println!("route {} -> {}", resp["route"], resp["answer"]);

    let trace = client.get(format!("{base}/traces/{}", resp["trace_id"].as_str().unwrap_or_default())).send()?;
    println!("trace fetch: {}", trace.status());

    let update = json!({ "node_id": "clinic-casaloma", "topic": "input", "payload": { "lineup_count": 20 },
                         "sent_at": "2024-10-01T14:10:00Z" });
    let ingest: Value = client.post(format!("{base}/ingest")).body(update.to_string()).send()?.json()?;
    println!("ingest: {ingest}");

    let empty = client.post(format!("{base}/query")).json(&json!({ "query": "" })).send()?;
    println!("empty query: {}", empty.status());
    Ok(())
}
