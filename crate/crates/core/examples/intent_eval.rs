//! Scores semantic routing on the 25 bundled benchmark queries with the
//! offline embedder and prints the per-query table.

use iotase::config::Config;
use iotase::engine::Engine;
use iotase::eval::{run_intent_eval, benchmark_cases};

fn main() -> anyhow::Result<()> {
    let engine = Engine::open(Config::default())?;
    let report = run_intent_eval(engine.rag().as_ref(), &benchmark_cases(), 3);
    print!("{}", report.render_table());
    Ok(())
}
