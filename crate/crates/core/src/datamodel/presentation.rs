//! The human-facing JSON shape used in generator prompts and evaluation fixtures.
//!
//! | presented key        | storage key         |
//! |----------------------|---------------------|
//! | `Service Type`       | `service_name`      |
//! | `Service Name`       | `display_name`      |
//! | `Service Address`    | `address`           |
//! | `Rate`               | `rate`              |
//! | `Occupancy Factor`   | `occupancy_factor`  |
//! | `Travel Time`        | enrichment, minutes |
//! | `Distance`           | enrichment, km      |
//! | any other key        | `extra.<key>`       |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{canonical_service_name, FieldValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedDocument {
    #[serde(rename = "Service Type")]
    pub service_type: String,
    #[serde(rename = "Service Name")]
    pub service_name: String,
    #[serde(rename = "Service Address")]
    pub service_address: String,
    #[serde(rename = "Rate")]
    pub rate: Option<f64>,
    #[serde(rename = "Occupancy Factor")]
    pub occupancy_factor: Option<f64>,
    #[serde(rename = "Travel Time", default, skip_serializing_if = "Option::is_none")]
    pub travel_time: Option<String>,
    #[serde(rename = "Distance", default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, FieldValue>,
}

impl PresentedDocument {
    /// Canonical service name recovered from the capitalised label.
    pub fn canonical_service(&self) -> String {
        canonical_service_name(&self.service_type)
    }
}

/// `"dog park"` → `"Dog park"`.
pub fn service_type_label(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Seconds → `"7 min"`, rounded to the nearest minute.
pub fn format_travel_time(seconds: f64) -> String {
    format!("{} min", (seconds / 60.0).round() as i64)
}

pub fn parse_travel_time(text: &str) -> Option<f64> {
    let minutes: f64 = text.trim().strip_suffix("min")?.trim().parse().ok()?;
    Some(minutes * 60.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_dog_park_listing() {
        let raw = r#"[
          {"Service Type": "Dog park", "Service Name": "Dog Park at Winston Churchill Park",
           "Service Address": "301 St Clair Ave W, Toronto, ON, Canada", "Rate": 4.0,
           "Occupancy Factor": 0.50, "Travel Time": "7 min"},
          {"Service Type": "Dog park", "Service Name": "Ramsden Dog Park",
           "Service Address": "Toronto, ON, Canada", "Rate": 4.8,
           "Occupancy Factor": 0.4, "Travel Time": "9 min"}
        ]"#;
        let docs: Vec<PresentedDocument> = serde_json::from_str(raw).unwrap();
        assert_eq!(docs[0].canonical_service(), "dog park");
        assert_eq!(docs[1].occupancy_factor, Some(0.4));
        assert_eq!(parse_travel_time(docs[0].travel_time.as_deref().unwrap()), Some(420.0));
        let back: Vec<PresentedDocument> =
            serde_json::from_str(&serde_json::to_string(&docs).unwrap()).unwrap();
        assert_eq!(back, docs);
    }

    #[test]
    fn labels_and_times() {
        assert_eq!(service_type_label("dog park"), "Dog park");
        assert_eq!(format_travel_time(540.0), "9 min");
        assert_eq!(format_travel_time(0.0), "0 min");
    }
}
