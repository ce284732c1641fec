use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{http_client, with_retry, FixtureStore};
use crate::datamodel::GeoPoint;
use crate::error::ProviderError;

pub const MAX_DESTINATIONS: usize = 50;

/// Travel costs from one origin, aligned with the destination order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub durations_s: Vec<f64>,
    pub distances_m: Vec<f64>,
}

pub trait RoutingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn matrix(&self, origin: GeoPoint, destinations: &[GeoPoint]) -> Result<Matrix, ProviderError>;
}

fn check_destinations(destinations: &[GeoPoint]) -> Result<(), ProviderError> {
    if destinations.is_empty() || destinations.len() > MAX_DESTINATIONS {
        return Err(ProviderError::InvalidRequest(format!(
            "{} destinations; expected 1..={MAX_DESTINATIONS}",
            destinations.len()
        )));
    }
    Ok(())
}

fn check_shape(m: &Matrix, n: usize) -> Result<(), ProviderError> {
    let ok = |v: &[f64]| v.len() == n && v.iter().all(|x| x.is_finite() && *x >= 0.0);
    if ok(&m.durations_s) && ok(&m.distances_m) {
        Ok(())
    } else {
        Err(ProviderError::Malformed(format!("matrix does not cover {n} destinations")))
    }
}

/// Haversine distance times a detour factor, at a constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRouter {
    pub detour_factor: f64,
    pub speed_mps: f64,
}

impl Default for SyntheticRouter {
    fn default() -> Self {
        // 30 km/h, a city-driving average.
        Self { detour_factor: 1.3, speed_mps: 30_000.0 / 3600.0 }
    }
}

impl RoutingProvider for SyntheticRouter {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn matrix(&self, origin: GeoPoint, destinations: &[GeoPoint]) -> Result<Matrix, ProviderError> {
        check_destinations(destinations)?;
        let distances_m: Vec<f64> = destinations.iter().map(|d| origin.distance_m(d) * self.detour_factor).collect();
        let durations_s = distances_m.iter().map(|d| (d / self.speed_mps).round()).collect();
        Ok(Matrix { durations_s, distances_m })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixFixture {
    origin: [f64; 2],
    destinations: Vec<[f64; 2]>,
    #[serde(flatten)]
    matrix: Matrix,
}

fn request_key(origin: GeoPoint, destinations: &[GeoPoint]) -> String {
    let fmt = |p: &GeoPoint| format!("{:.5},{:.5}", p.lat(), p.lon());
    let dests: Vec<String> = destinations.iter().map(fmt).collect();
    format!("{}|{}", fmt(&origin), dests.join(";"))
}

/// Replays recorded matrices; with `record` set, misses go to `live` and are saved.
pub struct FixtureRouter {
    store: FixtureStore,
    live: Option<Box<dyn RoutingProvider>>,
    record: bool,
}

impl FixtureRouter {
    pub fn new(store: FixtureStore) -> Self {
        Self { store, live: None, record: false }
    }

    pub fn recording(store: FixtureStore, live: Box<dyn RoutingProvider>) -> Self {
        Self { store, live: Some(live), record: true }
    }

    pub fn save(&self, origin: GeoPoint, destinations: &[GeoPoint], matrix: &Matrix) -> Result<(), ProviderError> {
        check_shape(matrix, destinations.len())?;
        let fixture = MatrixFixture {
            origin: [origin.lat(), origin.lon()],
            destinations: destinations.iter().map(|d| [d.lat(), d.lon()]).collect(),
            matrix: matrix.clone(),
        };
        self.store.write("routing", &request_key(origin, destinations), &fixture).map(|_| ())
    }
}

impl RoutingProvider for FixtureRouter {
    fn name(&self) -> &str {
        "fixture"
    }

    fn matrix(&self, origin: GeoPoint, destinations: &[GeoPoint]) -> Result<Matrix, ProviderError> {
        check_destinations(destinations)?;
        let key = request_key(origin, destinations);
        if let Some(f) = self.store.read::<MatrixFixture>("routing", &key)? {
            check_shape(&f.matrix, destinations.len())?;
            return Ok(f.matrix);
        }
        match (&self.live, self.record) {
            (Some(live), true) => {
                let m = live.matrix(origin, destinations)?;
                self.save(origin, destinations, &m)?;
                Ok(m)
            }
            _ => Err(ProviderError::Unavailable(format!("no routing fixture for {key}"))),
        }
    }
}

/// Tries `primary`, then `secondary` on any error.
pub struct FallbackRouter {
    primary: Box<dyn RoutingProvider>,
    secondary: Box<dyn RoutingProvider>,
    name: String,
}

impl FallbackRouter {
    pub fn new(primary: Box<dyn RoutingProvider>, secondary: Box<dyn RoutingProvider>) -> Self {
        let name = format!("{}+{}", primary.name(), secondary.name());
        Self { primary, secondary, name }
    }
}

impl RoutingProvider for FallbackRouter {
    fn name(&self) -> &str {
        &self.name
    }

    fn matrix(&self, origin: GeoPoint, destinations: &[GeoPoint]) -> Result<Matrix, ProviderError> {
        self.primary.matrix(origin, destinations).or_else(|e| {
            tracing::debug!(error = %e, "primary router failed; using fallback");
            self.secondary.matrix(origin, destinations)
        })
    }
}

/// OpenRouteService-compatible `/v2/matrix/driving-car` adapter.
pub struct OrsRouter {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl OrsRouter {
    pub fn new(base_url: &str, api_key: Option<String>) -> Result<Self, ProviderError> {
        Ok(Self {
            client: http_client(Duration::from_secs(2))?,
            url: format!("{}/v2/matrix/driving-car", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    /// `IOTASE_ORS_BASE_URL` (default the public endpoint) and `IOTASE_ORS_API_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let base = std::env::var("IOTASE_ORS_BASE_URL").unwrap_or_else(|_| "https://api.openrouteservice.org".into());
        Self::new(&base, std::env::var("IOTASE_ORS_API_KEY").ok())
    }
}

/// Reads row 0 of `durations` and `distances` (metres, seconds).
pub fn parse_ors_matrix(body: &Value, n: usize) -> Result<Matrix, ProviderError> {
    let row = |key: &str| -> Result<Vec<f64>, ProviderError> {
        body.get(key)
            .and_then(Value::as_array)
            .and_then(|rows| rows.first())
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Malformed(format!("missing `{key}` row")))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| ProviderError::Malformed(format!("unroutable entry in `{key}`"))))
            .collect()
    };
    let m = Matrix { durations_s: row("durations")?, distances_m: row("distances")? };
    check_shape(&m, n)?;
    Ok(m)
}

impl RoutingProvider for OrsRouter {
    fn name(&self) -> &str {
        "ors"
    }

    fn matrix(&self, origin: GeoPoint, destinations: &[GeoPoint]) -> Result<Matrix, ProviderError> {
        check_destinations(destinations)?;
        let locations: Vec<[f64; 2]> =
            std::iter::once(origin).chain(destinations.iter().copied()).map(|p| [p.lon(), p.lat()]).collect();
        let body = json!({
            "locations": locations,
            "sources": [0],
            "destinations": (1..=destinations.len()).collect::<Vec<_>>(),
            "metrics": ["duration", "distance"],
            "units": "m",
        });
        with_retry(2, || {
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(k) = &self.api_key {
                req = req.header("Authorization", k);
            }
            let resp = req.send().map_err(|e| ProviderError::from_transport(&e))?;
            let status = resp.status().as_u16();
            let text = resp.text().map_err(|e| ProviderError::from_transport(&e))?;
            if !(200..300).contains(&status) {
                return Err(ProviderError::from_status(status, &text));
            }
            let v: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
            parse_ors_matrix(&v, destinations.len())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identity_trip_is_zero() {
        let o = p(43.679, -79.406);
        let m = SyntheticRouter::default().matrix(o, &[o]).unwrap();
        assert_eq!(m, Matrix { durations_s: vec![0.0], distances_m: vec![0.0] });
    }

    #[test]
    fn destination_bounds() {
        let o = p(43.679, -79.406);
        assert!(SyntheticRouter::default().matrix(o, &[]).is_err());
        assert!(SyntheticRouter::default().matrix(o, &vec![o; 51]).is_err());
        assert!(SyntheticRouter::default().matrix(o, &vec![o; 50]).is_ok());
    }

    #[test]
    fn synthetic_distances_bound_haversine() {
        let o = p(43.679, -79.406);
        let d = [p(43.70, -79.40), p(43.60, -79.50), p(43.679, -79.2)];
        let m = SyntheticRouter::default().matrix(o, &d).unwrap();
        for (dist, dest) in m.distances_m.iter().zip(&d) {
            assert!(*dist >= o.distance_m(dest));
        }
    }

    #[test]
    fn fixture_miss_then_record() {
        let dir = tempfile::tempdir().unwrap();
        let o = p(43.679, -79.406);
        let d = [p(43.68, -79.41)];
        let replay = FixtureRouter::new(FixtureStore::new(dir.path()));
        assert!(matches!(replay.matrix(o, &d), Err(ProviderError::Unavailable(_))));
        let rec = FixtureRouter::recording(FixtureStore::new(dir.path()), Box::new(SyntheticRouter::default()));
        let recorded = rec.matrix(o, &d).unwrap();
        assert_eq!(replay.matrix(o, &d).unwrap(), recorded);
        let fallback = FallbackRouter::new(
            Box::new(FixtureRouter::new(FixtureStore::new(dir.path().join("empty")))),
            Box::new(SyntheticRouter::default()),
        );
        assert_eq!(fallback.matrix(o, &d).unwrap(), recorded);
        assert_eq!(fallback.name(), "fixture+synthetic");
    }

    #[test]
    fn raw_ors_distances_bound_haversine() {
        let raw = std::fs::read(FixtureStore::bundled().root().join("raw/ors_matrix.json")).unwrap();
        let v: Value = serde_json::from_slice(&raw).unwrap();
        let m = parse_ors_matrix(&v, 3).unwrap();
        let lonlat = |x: &Value| p(x["location"][1].as_f64().unwrap(), x["location"][0].as_f64().unwrap());
        let origin = lonlat(&v["sources"][0]);
        for (dist, dest) in m.distances_m.iter().zip(v["destinations"].as_array().unwrap()) {
            assert!(*dist >= origin.distance_m(&lonlat(dest)));
        }
    }

    #[test]
    fn bundled_fig5_trio() {
        let router = FixtureRouter::new(FixtureStore::bundled());
        let m = router
            .matrix(p(43.679, -79.406), &[p(43.683, -79.413), p(43.6777, -79.3905), p(43.6923, -79.4288)])
            .unwrap();
        assert_eq!(m.durations_s, vec![420.0, 540.0, 600.0]);
    }

    #[test]
    fn ors_payload_parsing() {
        let body = json!({"durations": [[420.0, 540.5]], "distances": [[2100.0, 2900.0]]});
        let m = parse_ors_matrix(&body, 2).unwrap();
        assert_eq!(m.durations_s, vec![420.0, 540.5]);
        assert!(parse_ors_matrix(&json!({"durations": [[null]], "distances": [[1.0]]}), 1).is_err());
        assert!(parse_ors_matrix(&body, 3).is_err());
    }
}
