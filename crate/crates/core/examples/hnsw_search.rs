//! Builds the service-description index, compares it with an exhaustive scan
//! and round-trips it through a snapshot file.

use std::time::Instant;

use iotase::dataset::{bundled_catalog, DEFAULT_SERVICES};
use iotase::embedder::{hashed_embedder, Embedder};
use iotase::rag::index_catalog;
use iotase::vector_index::{recall, HnswIndex, IndexParams};

fn main() -> anyhow::Result<()> {
    let catalog = bundled_catalog(DEFAULT_SERVICES)?;
    let embedder = hashed_embedder();

    let start = Instant::now();
    let index = index_catalog(&catalog, &embedder, IndexParams::default())?;
    println!("indexed {} services in {:?}, top layer {}", index.len(), start.elapsed(), index.max_level());

    for query in ["somewhere to fix my flat bicycle tire", "I need a haircut before the wedding"] {
        let q = embedder.embed_text(query)?;
        let approx = index.search(&q, 3);
        let exact = index.brute_force_search(&q, 3);
        println!("\n{query}");
        for hit in &approx {
            println!("  {:<32} {:.4}", hit.name, hit.similarity);
        }
        println!("  recall@3 vs scan: {:.2}", recall(&approx, &exact));
    }

    let path = std::env::temp_dir().join("iotase-example-index.bin");
    index.write_snapshot(&path)?;
    let back = HnswIndex::read_snapshot(&path)?;
    println!("\nsnapshot {} bytes, hash matches: {}", std::fs::metadata(&path)?.len(), back.snapshot_hash() == index.snapshot_hash());
    Ok(())
}
