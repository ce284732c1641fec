//! External-service adapters: routing matrix, maps text search, web search.
//!
//! Each capability has a live HTTP adapter and a fixture adapter. Fixture
//! files are content-addressed under `<fixture_dir>/<kind>/<sha256>.json`,
//! where the hash covers the normalized request. Live calls only happen
//! through an explicitly configured adapter; recording into the fixture
//! directory additionally requires `record = true`.

mod fixtures;
mod maps;
mod routing;
mod web;

use std::time::Duration;

use rand::Rng;

pub use crate::error::ProviderError;
pub use fixtures::{normalize_query, FixtureStore};
pub use maps::{parse_places_response, FixtureMaps, GooglePlaces, MapsProvider, MapsResult, PlaceDocument, MAPS_RESULT_CAP};
pub use routing::{
    parse_ors_matrix, FallbackRouter, FixtureRouter, Matrix, OrsRouter, RoutingProvider, SyntheticRouter,
    MAX_DESTINATIONS,
};
pub use web::{parse_tavily_response, truncate_utf8, FixtureWeb, TavilySearch, WebProvider, WebResult, WebSnippet, SNIPPET_MAX_BYTES};

/// Runs `call` up to `attempts` times, retrying transient failures after a
/// jittered pause.
pub fn with_retry<T>(attempts: usize, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
    let mut last = None;
    for attempt in 0..attempts.max(1) {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt + 1 < attempts => {
                let ms = rand::thread_rng().gen_range(100..300) * (attempt as u64 + 1);
                std::thread::sleep(Duration::from_millis(ms));
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| ProviderError::Unavailable("no attempts".into())))
}

pub(crate) fn http_client(timeout: Duration) -> Result<reqwest::blocking::Client, ProviderError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ProviderError::Unavailable(e.to_string()))
}
