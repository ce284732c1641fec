use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{http_client, normalize_query, with_retry, FixtureStore};
use crate::datamodel::GeoPoint;
use crate::error::ProviderError;

pub const MAPS_RESULT_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceDocument {
    pub name: String,
    pub address: String,
    pub location: GeoPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    pub source_attribution: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapsResult {
    pub places: Vec<PlaceDocument>,
    /// Set when a fixture adapter had no recording for the query.
    #[serde(default)]
    pub fixture_miss: bool,
}

pub trait MapsProvider: Send + Sync {
    fn name(&self) -> &str;
    fn text_search(&self, query: &str, origin: Option<GeoPoint>) -> Result<MapsResult, ProviderError>;
}

/// Parses a Places Text Search response. Entries without a usable name or
/// location are dropped; ratings outside [0, 5] become absent.
pub fn parse_places_response(body: &Value) -> Result<Vec<PlaceDocument>, ProviderError> {
    match body.get("status").and_then(Value::as_str).unwrap_or("OK") {
        "OK" => {}
        "ZERO_RESULTS" => return Ok(Vec::new()),
        "OVER_QUERY_LIMIT" => return Err(ProviderError::Quota("OVER_QUERY_LIMIT".into())),
        "REQUEST_DENIED" | "INVALID_REQUEST" => {
            let msg = body.get("error_message").and_then(Value::as_str).unwrap_or("");
            return Err(ProviderError::InvalidRequest(msg.to_string()));
        }
        other => return Err(ProviderError::Unavailable(other.to_string())),
    }
    let results =
        body.get("results").and_then(Value::as_array).ok_or_else(|| ProviderError::Malformed("missing `results`".into()))?;
    let mut out = Vec::new();
    for r in results.iter() {
        let name = r.get("name").and_then(Value::as_str).unwrap_or("").trim();
        let loc = r.pointer("/geometry/location");
        let lat = loc.and_then(|l| l.get("lat")).and_then(Value::as_f64);
        let lon = loc.and_then(|l| l.get("lng")).and_then(Value::as_f64);
        let (Some(lat), Some(lon)) = (lat, lon) else { continue };
        let Ok(location) = GeoPoint::new(lat, lon) else { continue };
        if name.is_empty() {
            continue;
        }
        out.push(PlaceDocument {
            name: name.to_string(),
            address: r.get("formatted_address").and_then(Value::as_str).unwrap_or("").to_string(),
            location,
            rate: r.get("rating").and_then(Value::as_f64).filter(|x| (0.0..=5.0).contains(x)),
            source_attribution: "Google Maps".into(),
        });
        if out.len() == MAPS_RESULT_CAP {
            break;
        }
    }
    Ok(out)
}

/// Google Places Text Search (`IOTASE_MAPS_API_KEY`, optional `IOTASE_MAPS_BASE_URL`).
pub struct GooglePlaces {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl GooglePlaces {
    pub fn new(base_url: &str, api_key: String) -> Result<Self, ProviderError> {
        Ok(Self {
            client: http_client(Duration::from_secs(5))?,
            url: format!("{}/maps/api/place/textsearch/json", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let key = std::env::var("IOTASE_MAPS_API_KEY")
            .map_err(|_| ProviderError::InvalidRequest("IOTASE_MAPS_API_KEY is not set".into()))?;
        let base = std::env::var("IOTASE_MAPS_BASE_URL").unwrap_or_else(|_| "https://maps.googleapis.com".into());
        Self::new(&base, key)
    }
}

impl MapsProvider for GooglePlaces {
    fn name(&self) -> &str {
        "google-places"
    }

    fn text_search(&self, query: &str, origin: Option<GeoPoint>) -> Result<MapsResult, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("empty query".into()));
        }
        let mut params = vec![("query", query.to_string()), ("key", self.api_key.clone())];
        if let Some(o) = origin {
            params.push(("location", format!("{},{}", o.lat(), o.lon())));
        }
        with_retry(2, || {
            let resp = self.client.get(&self.url).query(&params).send().map_err(|e| ProviderError::from_transport(&e))?;
            let status = resp.status().as_u16();
            let text = resp.text().map_err(|e| ProviderError::from_transport(&e))?;
            if !(200..300).contains(&status) {
                return Err(ProviderError::from_status(status, &text));
            }
            let v: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
            Ok(MapsResult { places: parse_places_response(&v)?, fixture_miss: false })
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MapsFixture {
    query: String,
    places: Vec<PlaceDocument>,
}

/// Replays text-search results keyed by normalized query. Origin is not part
/// of the key.
pub struct FixtureMaps {
    store: FixtureStore,
    live: Option<Box<dyn MapsProvider>>,
    record: bool,
}

impl FixtureMaps {
    pub fn new(store: FixtureStore) -> Self {
        Self { store, live: None, record: false }
    }

    pub fn recording(store: FixtureStore, live: Box<dyn MapsProvider>) -> Self {
        Self { store, live: Some(live), record: true }
    }

    pub fn save(&self, query: &str, places: &[PlaceDocument]) -> Result<(), ProviderError> {
        let key = normalize_query(query);
        let places = places.iter().take(MAPS_RESULT_CAP).cloned().collect();
        self.store.write("maps", &key, &MapsFixture { query: key.clone(), places }).map(|_| ())
    }
}

impl MapsProvider for FixtureMaps {
    fn name(&self) -> &str {
        "fixture"
    }

    fn text_search(&self, query: &str, origin: Option<GeoPoint>) -> Result<MapsResult, ProviderError> {
        let key = normalize_query(query);
        if key.is_empty() {
            return Err(ProviderError::InvalidRequest("empty query".into()));
        }
        if let Some(f) = self.store.read::<MapsFixture>("maps", &key)? {
            return Ok(MapsResult { places: f.places.into_iter().take(MAPS_RESULT_CAP).collect(), fixture_miss: false });
        }
        match (&self.live, self.record) {
            (Some(live), true) => {
                let r = live.text_search(query, origin)?;
                self.save(query, &r.places)?;
                Ok(r)
            }
            _ => Ok(MapsResult { places: Vec::new(), fixture_miss: true }),
        }
    }
}
