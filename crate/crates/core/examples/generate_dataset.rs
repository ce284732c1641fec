//! Generates a small synthetic city, writes it in the store's load format and
//! reads it back.

use iotase::dataset::{generate, CatalogSpec};
use iotase::docstore::{clean_dataset, load_dataset};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let ds = generate(&CatalogSpec::new(20, 400, 3))?;
    let manifest = ds.write(dir.path())?;
    println!("wrote {} services / {} documents to {}", manifest.services.len(), manifest.document_count(), dir.path().display());

    let mut counts: Vec<(&str, usize)> = ds.counts().into_iter().collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1));
    for (svc, n) in counts.iter().take(5) {
        println!("  {svc:<32} {n}");
    }

    let loaded = load_dataset(dir.path())?;
    let (_, report) = clean_dataset(loaded.documents);
    println!("ratings imputed: {}, occupancy left absent: {}", report.rates_imputed, report.occupancy_absent);
    Ok(())
}
