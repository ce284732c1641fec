//! Semantic routing plus geo retrieval: the query picks a service, the store
//! returns the nearest live places, and the routing fixture adds drive times.

use iotase::config::Config;
use iotase::dataset::{scenario_origin, DOG_PARK_QUERY};
use iotase::datamodel::format_travel_time;
use iotase::engine::Engine;

fn main() -> anyhow::Result<()> {
    let engine = Engine::open(Config::default())?;
    let ctx = engine.rag().retrieve(DOG_PARK_QUERY, scenario_origin(), &engine.config().search)?;

    println!("query: {DOG_PARK_QUERY}");
    println!("matched services:");
    for hit in &ctx.matched_services {
        println!("  {:<28} {:.4}", hit.name, hit.similarity);
    }
    println!("documents (routed: {}):", !ctx.unrouted);
    for d in &ctx.documents {
        let time = d.travel_time_s.map(format_travel_time).unwrap_or_else(|| "?".into());
        println!("  {:<40} {:>8}  rate {:?}  occupancy {:?}", d.display_name, time, d.rate, d.occupancy_factor);
    }
    Ok(())
}
