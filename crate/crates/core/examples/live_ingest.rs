//! Streams simulated sensor updates into the store, then shows that a stale
//! message loses to a newer one regardless of arrival order.

use std::sync::Arc;

use chrono::Duration;
use iotase::dataset::scenario_dataset;
use iotase::docstore::DocStore;
use iotase::ingest::{Ingestor, Schedule, StreamSimulator};
use iotase::datamodel::UidiMessage;

fn main() -> anyhow::Result<()> {
    let ds = scenario_dataset();
    let start = ds.documents[0].updated_at;
    let store = Arc::new(DocStore::new(Arc::new(ds.catalog), ds.field_schema));
    store.load(ds.documents.clone())?;
    let ingestor = Ingestor::new(store.clone());

    let mut sim = StreamSimulator::new(&ds.documents, Schedule::starting_at(start), 42);
    for _ in 0..5 {
        let batch = sim.next_tick();
        let report = ingestor.ingest_batch(&batch);
        println!("{}: {} accepted, {} rejected", sim.now(), report.accepted, report.rejected);
    }
    let garage = store.get("garage-avenue").expect("scenario node");
    println!("\ngarage-avenue now {:?}, occupancy {:?}", garage.extra, garage.occupancy_factor);

    let later = sim.now() + Duration::minutes(10);
    let newer = UidiMessage::input("gas-dupont", later).with("gas_price", 1.299);
    let older = UidiMessage::input("gas-dupont", later - Duration::minutes(1)).with("gas_price", 1.999);
    ingestor.apply_message(&newer).map_err(|r| anyhow::anyhow!("{r:?}"))?;
    println!("late delivery of the older reading: {:?}", ingestor.apply_message(&older).err());
    println!("gas-dupont price after out-of-order delivery: {:?}", store.get("gas-dupont").unwrap().extra["gas_price"]);
    Ok(())
}
