//! Loads a generated city into the document store and asks for the nearest
//! places of one service, with and without a distance cap.

use std::sync::Arc;

use iotase::dataset::{generate, CatalogSpec};
use iotase::datamodel::GeoPoint;
use iotase::docstore::{DocFilter, DocStore, GeoQuery};

fn main() -> anyhow::Result<()> {
    let ds = generate(&CatalogSpec::new(50, 5_000, 11))?;
    let store = DocStore::new(Arc::new(ds.catalog), ds.field_schema);
    store.load(ds.documents)?;
    println!("{} documents in {} collections", store.len(), store.collections().count());

    let service = store.collections().max_by_key(|c| c.len()).expect("non-empty").service_name().to_string();
    let origin = GeoPoint::new(43.6532, -79.3832)?;
    let q = GeoQuery::single(&service, origin, 5)?;
    println!("\nnearest {service}:");
    for n in store.nearest(&q)? {
        println!("  {:<40} {:>7.0} m  rate {:?}", n.document.display_name, n.distance_m, n.document.rate);
    }

    let capped = GeoQuery::single(&service, origin, 5)?.within(1_500.0).with_filter(DocFilter::MinRate { value: 4.0 });
    println!("\nwithin 1.5 km rated 4.0 or better: {}", store.nearest(&capped)?.len());
    Ok(())
}
