use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::datamodel::{GeoPoint, Region};
use crate::rag::ContextDocument;

/// A hard constraint read from the query that a real-time field can satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    ParkingAvailable,
    LowestGasPrice,
    ShortestLineup,
}

impl Preference {
    pub const ALL: [Preference; 3] = [Preference::ParkingAvailable, Preference::LowestGasPrice, Preference::ShortestLineup];

    pub fn field(&self) -> &'static str {
        match self {
            Preference::ParkingAvailable => "parking_available",
            Preference::LowestGasPrice => "gas_price",
            Preference::ShortestLineup => "lineup_count",
        }
    }

    /// Word an answer must contain to show it honoured the preference.
    pub fn token(&self) -> &'static str {
        match self {
            Preference::ParkingAvailable => "available",
            Preference::LowestGasPrice => "price",
            Preference::ShortestLineup => "lineup",
        }
    }

    fn keywords(&self) -> &'static [&'static str] {
        match self {
            Preference::ParkingAvailable => &["parking", "park my car", "spot"],
            Preference::LowestGasPrice => {
                &["cheap", "cheapest", "cheaper", "price", "prices", "lowest", "affordable", "budget", "inexpensive"]
            }
            Preference::ShortestLineup => {
                &["lineup", "line-up", "line up", "wait", "waiting", "queue", "short line", "shortest", "quick"]
            }
        }
    }

    fn mentioned_in(&self, query: &str) -> bool {
        let q = format!(" {} ", query.to_lowercase().replace(|c: char| !c.is_alphanumeric() && c != '-', " "));
        self.keywords().iter().any(|k| q.contains(&format!(" {k} ")))
    }
}

/// Preferences the query asks for and at least one document can answer.
pub fn extract_preferences(query: &str, documents: &[ContextDocument]) -> Vec<Preference> {
    Preference::ALL
        .into_iter()
        .filter(|p| p.mentioned_in(query) && documents.iter().any(|d| d.extra.contains_key(p.field())))
        .collect()
}

/// Travel time when every document has one, otherwise distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximitySignal {
    TravelTime,
    Distance,
}

pub fn proximity_signal(documents: &[ContextDocument]) -> ProximitySignal {
    if !documents.is_empty() && documents.iter().all(|d| d.travel_time_s.is_some()) {
        ProximitySignal::TravelTime
    } else {
        ProximitySignal::Distance
    }
}

fn preference_score(p: Preference, d: &ContextDocument) -> f64 {
    let field = d.extra.get(p.field());
    match p {
        Preference::ParkingAvailable => match field.and_then(|v| v.as_bool()) {
            Some(true) => 0.0,
            _ => 1.0,
        },
        Preference::LowestGasPrice | Preference::ShortestLineup => {
            field.and_then(|v| v.as_f64()).unwrap_or(f64::INFINITY)
        }
    }
}

/// Lexicographic preference order: hard preferences, then lower occupancy
/// (absent reads as empty), then closer, then higher rating, then name.
pub fn compare_documents(
    a: &ContextDocument,
    b: &ContextDocument,
    prefs: &[Preference],
    signal: ProximitySignal,
) -> Ordering {
    for &p in prefs {
        let o = preference_score(p, a).total_cmp(&preference_score(p, b));
        if o != Ordering::Equal {
            return o;
        }
    }
    let proximity = |d: &ContextDocument| match signal {
        ProximitySignal::TravelTime => d.travel_time_s.unwrap_or(f64::INFINITY),
        ProximitySignal::Distance => d.distance_m,
    };
    a.occupancy_factor
        .unwrap_or(0.0)
        .total_cmp(&b.occupancy_factor.unwrap_or(0.0))
        .then_with(|| proximity(a).total_cmp(&proximity(b)))
        .then_with(|| b.rate.unwrap_or(f64::NEG_INFINITY).total_cmp(&a.rate.unwrap_or(f64::NEG_INFINITY)))
        .then_with(|| a.display_name.cmp(&b.display_name))
        .then_with(|| a.node_id.cmp(&b.node_id))
}

/// Document indices, best first.
pub fn rank_documents(documents: &[ContextDocument], prefs: &[Preference]) -> Vec<usize> {
    let signal = proximity_signal(documents);
    let mut order: Vec<usize> = (0..documents.len()).collect();
    order.sort_by(|&i, &j| compare_documents(&documents[i], &documents[j], prefs, signal));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub name: &'static str,
    pub lat: f64,
    pub lon: f64,
}

/// City centres the classifier can recognise in query text.
pub const GAZETTEER: &[Place] = &[
    Place { name: "Toronto", lat: 43.6532, lon: -79.3832 },
    Place { name: "North York", lat: 43.7615, lon: -79.4111 },
    Place { name: "Scarborough", lat: 43.7764, lon: -79.2318 },
    Place { name: "Etobicoke", lat: 43.6205, lon: -79.5132 },
    Place { name: "Mississauga", lat: 43.5890, lon: -79.6441 },
    Place { name: "Brampton", lat: 43.7315, lon: -79.7624 },
    Place { name: "Markham", lat: 43.8561, lon: -79.3370 },
    Place { name: "Oshawa", lat: 43.8971, lon: -78.8658 },
    Place { name: "Whitby", lat: 43.8975, lon: -78.9429 },
    Place { name: "Hamilton", lat: 43.2557, lon: -79.8711 },
    Place { name: "Ottawa", lat: 45.4215, lon: -75.6972 },
    Place { name: "Montreal", lat: 45.5019, lon: -73.5674 },
    Place { name: "Vancouver", lat: 49.2827, lon: -123.1207 },
    Place { name: "New York", lat: 40.7128, lon: -74.0060 },
    Place { name: "Chicago", lat: 41.8781, lon: -87.6298 },
    Place { name: "London", lat: 51.5072, lon: -0.1276 },
    Place { name: "Paris", lat: 48.8566, lon: 2.3522 },
    Place { name: "Cairo", lat: 30.0444, lon: 31.2357 },
    Place { name: "Alexandria", lat: 31.2001, lon: 29.9187 },
    Place { name: "Dubai", lat: 25.2048, lon: 55.2708 },
    Place { name: "Tokyo", lat: 35.6762, lon: 139.6503 },
];

/// Longest gazetteer name appearing as whole words in the query.
pub fn find_place(query: &str) -> Option<Place> {
    let q = format!(" {} ", query.to_lowercase().replace(|c: char| !c.is_alphanumeric(), " "));
    GAZETTEER
        .iter()
        .filter(|p| q.contains(&format!(" {} ", p.name.to_lowercase())))
        .max_by_key(|p| p.name.len())
        .copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    Query,
    Client,
    Default,
}

/// Where the query is about and whether any registered region covers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLocation {
    pub point: GeoPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<String>,
    pub source: LocationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
}

impl ResolvedLocation {
    pub fn covered(&self) -> bool {
        self.region_id.is_some()
    }
}

/// Within this distance of a named place, the client position is kept.
const SAME_PLACE_M: f64 = 25_000.0;

/// A place named in the query wins over the client origin, unless the
/// client is already there.
pub fn resolve_location(query: &str, client: Option<GeoPoint>, default: GeoPoint, regions: &[Region]) -> ResolvedLocation {
    let named = find_place(query).map(|p| (p, GeoPoint::new(p.lat, p.lon).expect("gazetteer coordinates")));
    let (point, place, source) = match (named, client) {
        (Some((p, at)), Some(c)) if c.distance_m(&at) <= SAME_PLACE_M => (c, Some(p.name.to_string()), LocationSource::Client),
        (Some((p, at)), _) => (at, Some(p.name.to_string()), LocationSource::Query),
        (None, Some(c)) => (c, None, LocationSource::Client),
        (None, None) => (default, None, LocationSource::Default),
    };
    let region_id = regions.iter().find(|r| r.contains(&point)).map(|r| r.region_id.clone());
    ResolvedLocation { point, place, source, region_id }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::FieldValue;

    fn d(name: &str, occ: Option<f64>, tt: Option<f64>, rate: Option<f64>) -> ContextDocument {
        ContextDocument {
            node_id: Some(name.to_lowercase()),
            service_name: "gas station".into(),
            display_name: name.into(),
            address: String::new(),
            location: GeoPoint::new(43.7, -79.4).unwrap(),
            rate,
            occupancy_factor: occ,
            extra: Default::default(),
            distance_m: 100.0,
            travel_time_s: tt,
            route_distance_m: None,
            updated_at: None,
            source_attribution: None,
        }
    }

    fn with(mut doc: ContextDocument, k: &str, v: FieldValue) -> ContextDocument {
        doc.extra.insert(k.into(), v);
        doc
    }

    #[test]
    fn lexicographic_key() {
        let docs = vec![
            d("A", Some(0.5), Some(60.0), Some(5.0)),
            d("B", None, Some(600.0), Some(3.0)),
            d("C", Some(0.5), Some(30.0), Some(1.0)),
            d("D", Some(0.5), Some(30.0), Some(4.0)),
        ];
        assert_eq!(rank_documents(&docs, &[]), vec![1, 3, 2, 0]);
    }

    #[test]
    fn hard_preferences_dominate() {
        let docs = vec![
            with(d("Near", Some(0.1), Some(60.0), Some(5.0)), "gas_price", FieldValue::Float(1.62)),
            with(d("Cheap", Some(0.9), Some(900.0), Some(2.0)), "gas_price", FieldValue::Float(1.41)),
            d("NoPrice", Some(0.0), Some(10.0), Some(5.0)),
        ];
        let prefs = extract_preferences("cheapest gas near me", &docs);
        assert_eq!(prefs, vec![Preference::LowestGasPrice]);
        assert_eq!(rank_documents(&docs, &prefs)[0], 1);
        assert!(extract_preferences("gas near me", &docs).is_empty());
    }

    #[test]
    fn preference_needs_a_field() {
        let docs = vec![d("A", None, None, None)];
        assert!(extract_preferences("walk-in clinic with a short lineup", &docs).is_empty());
        let docs = vec![with(d("A", None, None, None), "lineup_count", FieldValue::Int(3))];
        assert_eq!(extract_preferences("walk-in clinic with a short lineup", &docs), vec![Preference::ShortestLineup]);
    }

    #[test]
    fn distance_used_when_travel_time_missing() {
        let mut a = d("A", None, None, None);
        a.distance_m = 500.0;
        let mut b = d("B", None, Some(10.0), None);
        b.distance_m = 900.0;
        assert_eq!(rank_documents(&[a, b], &[]), vec![0, 1]);
    }

    #[test]
    fn locations() {
        let regions = [Region::toronto()];
        let toronto = GeoPoint::new(43.679, -79.406).unwrap();
        let cairo = resolve_location("Chinese restaurant in Cairo", Some(toronto), toronto, &regions);
        assert_eq!(cairo.place.as_deref(), Some("Cairo"));
        assert!(!cairo.covered());
        let here = resolve_location("dog park in Toronto", Some(toronto), toronto, &regions);
        assert_eq!(here.point, toronto);
        assert!(here.covered());
        let oshawa = resolve_location("weather in Oshawa", None, toronto, &regions);
        assert_eq!(oshawa.source, LocationSource::Query);
        assert!(!oshawa.covered());
        assert_eq!(find_place("new york pizza").unwrap().name, "New York");
        assert!(find_place("yorkshire terrier groomer").is_none());
    }
}
