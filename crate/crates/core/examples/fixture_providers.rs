//! Record-and-replay for external services: a stand-in live provider is
//! recorded once into a fixture directory and replayed offline afterwards.

use iotase::datamodel::GeoPoint;
use iotase::providers::{FixtureStore, FixtureWeb, ProviderError, WebProvider, WebResult, WebSnippet};

struct CannedSearch;

impl WebProvider for CannedSearch {
    fn name(&self) -> &str {
        "canned"
    }

    fn search(&self, query: &str) -> Result<WebResult, ProviderError> {
        Ok(WebResult {
            snippets: vec![WebSnippet {
                url: "https://example.org/answer".into(),
                title: format!("About {query}"),
                content: "Canned content standing in for a live search API.".into(),
                fetched_at: chrono::Utc::now(),
            }],
            fixture_miss: false,
        })
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let store = FixtureStore::new(dir.path());

    let recorder = FixtureWeb::recording(store.clone(), Box::new(CannedSearch));
    let first = recorder.search("Best bagels in Montreal")?;
    println!("recorded {} snippet(s) at {}", first.snippets.len(), store.path_for("web", "best bagels in montreal").display());

    let replay = FixtureWeb::new(store);
    let again = replay.search("best bagels in MONTREAL")?;
    println!("replayed identical: {}", again.snippets == first.snippets);
    println!("unrecorded query is a miss: {}", replay.search("something else")?.fixture_miss);

    let origin = GeoPoint::new(43.679, -79.406)?;
    println!("(bundled fixtures also cover routing from {origin:?})");
    Ok(())
}
