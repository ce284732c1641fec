//! The agent loop with the deterministic mock model: one query per route,
//! then each live-field scenario before and after its sensor update.

use iotase::config::Config;
use iotase::dataset::{scenario_origin, Scenario, DOG_PARK_QUERY};
use iotase::engine::Engine;

fn main() -> anyhow::Result<()> {
    let engine = Engine::open(Config::default())?;
    let origin = Some(scenario_origin());

    for query in [DOG_PARK_QUERY, "Chinese restaurant in Cairo", "What's the weather in Oshawa?", "Thanks a lot!"] {
        let out = engine.query("demo", query, origin)?;
        println!("[{}] {query}\n  {}\n  trace {} {}\n", out.route.as_str(), out.answer, out.trace_id, out.trace.summary());
    }

    for s in Scenario::all() {
        let before = engine.query(s.name, s.query, origin)?;
        engine.ingestor().ingest_batch(&s.update);
        let after = engine.query(s.name, s.query, origin)?;
        let name = |o: &iotase::agents::QueryOutcome| o.recommendation.as_ref().map(|d| d.display_name.clone());
        println!("{:<8} before {:?}\n         after  {:?}", s.name, name(&before), name(&after));
    }
    Ok(())
}
