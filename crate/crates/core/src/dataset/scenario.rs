//! A small hand-placed dataset around one Toronto origin: three dog parks
//! with the travel times recorded in the routing fixture, plus three
//! garages, gas stations and walk-in clinics whose real-time fields decide
//! the recommendation.

use chrono::{Duration, TimeZone, Utc};

use super::{bundled_catalog, GeneratedDataset};
use crate::datamodel::{DeviceDocument, ExtraFieldSchema, FieldValue, GeoPoint, Region, UidiMessage};

pub const SCENARIO_ORIGIN: (f64, f64) = (43.679, -79.406);

pub const DOG_PARK_QUERY: &str =
    "I want to take my dog for walking and playing catch the ball, so I can unleash it";
pub const PARKING_QUERY: &str = "I'm downtown during rush hour and need a parking spot for my car";
pub const GAS_QUERY: &str = "I need to refuel soon. Where is the gas station with the cheapest price near me?";
pub const CLINIC_QUERY: &str = "I need a walk-in clinic with a short lineup near my location";

/// A query whose answer hinges on one real-time field, and the live update
/// that changes the answer.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub query: &'static str,
    pub service: &'static str,
    pub field: &'static str,
    pub expected_before: &'static str,
    pub update: Vec<UidiMessage>,
    pub expected_after: &'static str,
}

struct Place {
    id: &'static str,
    service: &'static str,
    name: &'static str,
    address: &'static str,
    at: (f64, f64),
    rate: f64,
    occupancy: f64,
    field: Option<(&'static str, FieldValue)>,
}

const fn place(
    id: &'static str,
    service: &'static str,
    name: &'static str,
    address: &'static str,
    at: (f64, f64),
    rate: f64,
    occupancy: f64,
) -> Place {
    Place { id, service, name, address, at, rate, occupancy, field: None }
}

fn places() -> Vec<Place> {
    let with = |mut p: Place, k: &'static str, v: FieldValue| {
        p.field = Some((k, v));
        p
    };
    vec![
        place("park-winston", "dog park", "Dog Park at Winston Churchill Park", "301 St Clair Ave W, Toronto, ON, Canada", (43.6830, -79.4130), 4.0, 0.50),
        place("park-ramsden", "dog park", "Ramsden Dog Park", "Toronto, ON, Canada", (43.6777, -79.3905), 4.8, 0.40),
        place("park-cedarvale", "dog park", "Cedarvale Park Dogs Off-Leash Area", "443 Arlington Ave, York, ON M6C 3A2, Canada", (43.6923, -79.4288), 4.6, 0.70),
        with(place("garage-stclair", "parking garage", "St Clair West Parking Garage", "1 Wychwood Ave, Toronto, ON", (43.6845, -79.4150), 3.9, 0.55), "parking_available", FieldValue::Bool(false)),
        with(place("garage-avenue", "parking garage", "Avenue Road Public Garage", "90 Avenue Rd, Toronto, ON", (43.6752, -79.3968), 4.1, 0.85), "parking_available", FieldValue::Bool(true)),
        with(place("garage-casaloma", "parking garage", "Casa Loma Garage", "1 Austin Terrace, Toronto, ON", (43.6780, -79.4094), 4.3, 0.35), "parking_available", FieldValue::Bool(false)),
        with(place("gas-bathurst", "gas station", "Bathurst Fuel", "1100 Bathurst St, Toronto, ON", (43.6740, -79.4130), 4.0, 0.30), "gas_price", FieldValue::Float(1.619)),
        with(place("gas-dupont", "gas station", "Dupont Gas Bar", "610 Dupont St, Toronto, ON", (43.6735, -79.4180), 3.8, 0.60), "gas_price", FieldValue::Float(1.489)),
        with(place("gas-christie", "gas station", "Christie Petro", "780 Christie St, Toronto, ON", (43.6800, -79.4225), 4.2, 0.20), "gas_price", FieldValue::Float(1.559)),
        with(place("clinic-foresthill", "walk-in clinic", "Forest Hill Walk-In Clinic", "491 Eglinton Ave W, Toronto, ON", (43.7036, -79.4140), 4.1, 0.60), "lineup_count", FieldValue::Int(12)),
        with(place("clinic-casaloma", "walk-in clinic", "Casa Loma Medical Walk-In", "385 Spadina Rd, Toronto, ON", (43.6865, -79.4040), 3.9, 0.45), "lineup_count", FieldValue::Int(3)),
        with(place("clinic-davenport", "walk-in clinic", "Davenport Family Walk-In", "1245 Davenport Rd, Toronto, ON", (43.6755, -79.4340), 4.4, 0.30), "lineup_count", FieldValue::Int(7)),
    ]
}

/// The scenario documents over the full bundled catalog, so query routing
/// still has every service to choose from.
pub fn scenario_dataset() -> GeneratedDataset {
    let at = Utc.with_ymd_and_hms(2024, 10, 1, 14, 0, 0).unwrap();
    let documents = places()
        .into_iter()
        .map(|p| DeviceDocument {
            node_id: p.id.into(),
            service_name: p.service.into(),
            display_name: p.name.into(),
            address: p.address.into(),
            location: GeoPoint::new(p.at.0, p.at.1).expect("static"),
            rate: Some(p.rate),
            occupancy_factor: Some(p.occupancy),
            extra: p.field.map(|(k, v)| [(k.to_string(), v)].into()).unwrap_or_default(),
            updated_at: at,
        })
        .collect();
    GeneratedDataset {
        catalog: bundled_catalog(super::DEFAULT_SERVICES).expect("bundled catalog"),
        regions: vec![Region::toronto()],
        field_schema: ExtraFieldSchema::default(),
        documents,
    }
}

impl Scenario {
    /// The three real-time-field scenarios. Updates are stamped five minutes
    /// after the dataset.
    pub fn all() -> Vec<Scenario> {
        let at = Utc.with_ymd_and_hms(2024, 10, 1, 14, 0, 0).unwrap() + Duration::minutes(5);
        vec![
            Scenario {
                name: "parking",
                query: PARKING_QUERY,
                service: "parking garage",
                field: "parking_available",
                expected_before: "Avenue Road Public Garage",
                update: vec![
                    UidiMessage::input("garage-avenue", at).with("parking_available", false),
                    UidiMessage::input("garage-stclair", at).with("parking_available", true),
                ],
                expected_after: "St Clair West Parking Garage",
            },
            Scenario {
                name: "gas",
                query: GAS_QUERY,
                service: "gas station",
                field: "gas_price",
                expected_before: "Dupont Gas Bar",
                update: vec![UidiMessage::input("gas-christie", at).with("gas_price", 1.399)],
                expected_after: "Christie Petro",
            },
            Scenario {
                name: "clinic",
                query: CLINIC_QUERY,
                service: "walk-in clinic",
                field: "lineup_count",
                expected_before: "Casa Loma Medical Walk-In",
                update: vec![UidiMessage::input("clinic-casaloma", at).with("lineup_count", 15)],
                expected_after: "Davenport Family Walk-In",
            },
        ]
    }
}

pub fn scenario_origin() -> GeoPoint {
    GeoPoint::new(SCENARIO_ORIGIN.0, SCENARIO_ORIGIN.1).expect("static")
}
