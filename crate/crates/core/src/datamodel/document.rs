use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{canonical_service_name, GeoPoint, ServiceCatalog};

pub type Timestamp = DateTime<Utc>;

/// A typed real-time field value stored in [`DeviceDocument::extra`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl FieldValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FieldValue::Int(i) => Some(*i as f64),
            FieldValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            FieldValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Bool(b) => write!(f, "{b}"),
            FieldValue::Int(i) => write!(f, "{i}"),
            FieldValue::Float(x) => write!(f, "{x}"),
            FieldValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Bool,
    /// Finite, non-negative real (prices, minutes).
    Number,
    /// Non-negative integer (queue lengths, counts).
    Count,
    Text,
}

impl FieldKind {
    /// Coerces a JSON value into this kind, normalising integers given for `Number`.
    pub fn coerce(&self, value: &Value) -> Option<FieldValue> {
        match (self, value) {
            (FieldKind::Bool, Value::Bool(b)) => Some(FieldValue::Bool(*b)),
            (FieldKind::Number, Value::Number(n)) => {
                n.as_f64().filter(|x| x.is_finite() && *x >= 0.0).map(FieldValue::Float)
            }
            (FieldKind::Count, Value::Number(n)) => n
                .as_i64()
                .filter(|i| *i >= 0)
                .map(FieldValue::Int),
            (FieldKind::Text, Value::String(s)) => Some(FieldValue::Text(s.clone())),
            _ => None,
        }
    }

    fn admits(&self, value: &FieldValue) -> bool {
        match (self, value) {
            (FieldKind::Bool, FieldValue::Bool(_)) => true,
            (FieldKind::Number, FieldValue::Float(x)) => x.is_finite() && *x >= 0.0,
            (FieldKind::Count, FieldValue::Int(i)) => *i >= 0,
            (FieldKind::Text, FieldValue::Text(_)) => true,
            _ => false,
        }
    }
}

/// Which real-time fields exist, their types, and which services may carry them.
///
/// A service listed in `services` may only carry the keys listed for it; any
/// other service may carry any key declared in `fields`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraFieldSchema {
    pub fields: BTreeMap<String, FieldKind>,
    #[serde(default)]
    pub services: BTreeMap<String, BTreeSet<String>>,
}

impl Default for ExtraFieldSchema {
    fn default() -> Self {
        let fields = BTreeMap::from([
            ("parking_available".to_string(), FieldKind::Bool),
            ("gas_price".to_string(), FieldKind::Number),
            ("lineup_count".to_string(), FieldKind::Count),
        ]);
        let allow = |keys: &[&str]| keys.iter().map(|k| k.to_string()).collect::<BTreeSet<_>>();
        let services = BTreeMap::from([
            ("parking garage".to_string(), allow(&["parking_available"])),
            ("parking lot".to_string(), allow(&["parking_available"])),
            ("gas station".to_string(), allow(&["gas_price"])),
            ("walk-in clinic".to_string(), allow(&["lineup_count"])),
        ]);
        Self { fields, services }
    }
}

impl ExtraFieldSchema {
    pub fn kind_for(&self, service: &str, key: &str) -> Option<FieldKind> {
        if let Some(allowed) = self.services.get(service) {
            if !allowed.contains(key) {
                return None;
            }
        }
        self.fields.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationError {
    #[error("missing field `{field}`")]
    MissingField { field: String },
    #[error("field `{field}` should be {expected}")]
    WrongType { field: String, expected: String },
    #[error("rate {value} outside [0, 5]")]
    RateOutOfRange { value: f64 },
    #[error("occupancy factor {value} outside [0, 1]")]
    OccupancyOutOfRange { value: f64 },
    #[error("unknown service `{service}`")]
    UnknownService { service: String },
    #[error("malformed location: {reason}")]
    MalformedLocation { reason: String },
    #[error("field `{field}` not allowed for service `{service}`")]
    UnknownExtraField { service: String, field: String },
    #[error("field `{field}` should be {expected:?}")]
    ExtraFieldType { field: String, expected: FieldKind },
    #[error("field `{field}` cannot be changed by an update")]
    ImmutableField { field: String },
}

/// The live record of one place / IoT node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDocument {
    pub node_id: String,
    pub service_name: String,
    pub display_name: String,
    #[serde(default)]
    pub address: String,
    pub location: GeoPoint,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub occupancy_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, FieldValue>,
    pub updated_at: Timestamp,
}

impl DeviceDocument {
    /// Checks every document invariant, collecting all violations.
    pub fn validate(
        &self,
        catalog: &ServiceCatalog,
        schema: &ExtraFieldSchema,
    ) -> Result<(), Vec<ValidationError>> {
        let mut errors = Vec::new();
        if self.node_id.is_empty() {
            errors.push(ValidationError::MissingField { field: "node_id".into() });
        }
        if !catalog.contains(&self.service_name) {
            errors.push(ValidationError::UnknownService { service: self.service_name.clone() });
        }
        if let Some(r) = self.rate {
            if !(0.0..=5.0).contains(&r) {
                errors.push(ValidationError::RateOutOfRange { value: r });
            }
        }
        if let Some(o) = self.occupancy_factor {
            if !(0.0..=1.0).contains(&o) {
                errors.push(ValidationError::OccupancyOutOfRange { value: o });
            }
        }
        for (key, value) in &self.extra {
            match schema.kind_for(&self.service_name, key) {
                None => errors.push(ValidationError::UnknownExtraField {
                    service: self.service_name.clone(),
                    field: key.clone(),
                }),
                Some(kind) if !kind.admits(value) => errors.push(ValidationError::ExtraFieldType {
                    field: key.clone(),
                    expected: kind,
                }),
                Some(_) => {}
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

fn take_str(raw: &Map<String, Value>, field: &str, errors: &mut Vec<ValidationError>) -> Option<String> {
    match raw.get(field) {
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(Value::String(_)) | None | Some(Value::Null) => {
            errors.push(ValidationError::MissingField { field: field.into() });
            None
        }
        Some(_) => {
            errors.push(ValidationError::WrongType { field: field.into(), expected: "string".into() });
            None
        }
    }
}

fn take_opt_f64(raw: &Map<String, Value>, field: &str, errors: &mut Vec<ValidationError>) -> Option<f64> {
    match raw.get(field) {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(_) => {
            errors.push(ValidationError::WrongType { field: field.into(), expected: "number".into() });
            None
        }
    }
}

pub(crate) fn parse_location(value: Option<&Value>) -> Result<GeoPoint, ValidationError> {
    let obj = match value {
        Some(Value::Object(o)) => o,
        None | Some(Value::Null) => {
            return Err(ValidationError::MalformedLocation { reason: "missing".into() })
        }
        Some(_) => {
            return Err(ValidationError::MalformedLocation { reason: "expected {lat, lon}".into() })
        }
    };
    let coord = |k: &str| obj.get(k).and_then(Value::as_f64);
    match (coord("lat"), coord("lon")) {
        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon)
            .map_err(|e| ValidationError::MalformedLocation { reason: e.to_string() }),
        _ => Err(ValidationError::MalformedLocation { reason: "lat and lon must be numbers".into() }),
    }
}

/// Builds a [`DeviceDocument`] from its storage encoding, reporting every
/// violated invariant rather than stopping at the first.
pub fn validate_document(
    raw: &Map<String, Value>,
    catalog: &ServiceCatalog,
    schema: &ExtraFieldSchema,
) -> Result<DeviceDocument, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let node_id = take_str(raw, "node_id", &mut errors);
    let service_name = take_str(raw, "service_name", &mut errors).map(|s| canonical_service_name(&s));
    let display_name = take_str(raw, "display_name", &mut errors);
    let address = match raw.get("address") {
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let location = parse_location(raw.get("location")).map_err(|e| errors.push(e)).ok();
    let rate = take_opt_f64(raw, "rate", &mut errors);
    let occupancy_factor = take_opt_f64(raw, "occupancy_factor", &mut errors);

    let mut extra = BTreeMap::new();
    match raw.get("extra") {
        None | Some(Value::Null) => {}
        Some(Value::Object(fields)) => {
            let service = service_name.clone().unwrap_or_default();
            for (key, value) in fields {
                match schema.kind_for(&service, key) {
                    None => errors.push(ValidationError::UnknownExtraField {
                        service: service.clone(),
                        field: key.clone(),
                    }),
                    Some(kind) => match kind.coerce(value) {
                        Some(v) => {
                            extra.insert(key.clone(), v);
                        }
                        None => errors.push(ValidationError::ExtraFieldType {
                            field: key.clone(),
                            expected: kind,
                        }),
                    },
                }
            }
        }
        Some(_) => errors.push(ValidationError::WrongType { field: "extra".into(), expected: "object".into() }),
    }

    let updated_at = match raw.get("updated_at") {
        None | Some(Value::Null) => DateTime::<Utc>::UNIX_EPOCH,
        Some(v) => match serde_json::from_value::<Timestamp>(v.clone()) {
            Ok(t) => t,
            Err(_) => {
                errors.push(ValidationError::WrongType {
                    field: "updated_at".into(),
                    expected: "RFC 3339 timestamp".into(),
                });
                DateTime::<Utc>::UNIX_EPOCH
            }
        },
    };

    let (Some(node_id), Some(service_name), Some(display_name), Some(location)) =
        (node_id, service_name, display_name, location)
    else {
        return Err(errors);
    };
    let doc = DeviceDocument {
        node_id,
        service_name,
        display_name,
        address,
        location,
        rate,
        occupancy_factor,
        extra,
        updated_at,
    };
    // Extra-field problems were already collected above.
    if let Err(more) = doc.validate(catalog, schema) {
        for e in more {
            if !errors.contains(&e) {
                errors.push(e);
            }
        }
    }
    if errors.is_empty() {
        Ok(doc)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::ServiceDescriptor;
    use serde_json::json;

    fn catalog() -> ServiceCatalog {
        ServiceCatalog::new(vec![
            ServiceDescriptor::new("s1", "dog park", "Off-leash parks for dogs.").unwrap(),
            ServiceDescriptor::new("s2", "gas station", "Fuel for vehicles.").unwrap(),
        ])
        .unwrap()
    }

    fn raw(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn accepts_first_dog_park_record() {
        let r = raw(json!({
            "node_id": "dp-1",
            "service_name": "Dog park",
            "display_name": "Dog Park at Winston Churchill Park",
            "address": "301 St Clair Ave W, Toronto, ON, Canada",
            "location": {"lat": 43.6830, "lon": -79.4130},
            "rate": 4.0,
            "occupancy_factor": 0.50
        }));
        let doc = validate_document(&r, &catalog(), &ExtraFieldSchema::default()).unwrap();
        assert_eq!(doc.service_name, "dog park");
        assert_eq!(doc.rate, Some(4.0));
        assert_eq!(doc.occupancy_factor, Some(0.5));
    }

    #[test]
    fn occupancy_above_one_rejected() {
        let r = raw(json!({
            "node_id": "dp-1", "service_name": "dog park", "display_name": "x",
            "location": {"lat": 43.6, "lon": -79.4}, "occupancy_factor": 1.5
        }));
        let errs = validate_document(&r, &catalog(), &ExtraFieldSchema::default()).unwrap_err();
        assert_eq!(errs, vec![ValidationError::OccupancyOutOfRange { value: 1.5 }]);
    }

    #[test]
    fn absent_rate_and_occupancy_stay_absent() {
        let r = raw(json!({
            "node_id": "dp-2", "service_name": "dog park", "display_name": "Ramsden Dog Park",
            "location": {"lat": 43.6777, "lon": -79.3905}
        }));
        let doc = validate_document(&r, &catalog(), &ExtraFieldSchema::default()).unwrap();
        assert_eq!(doc.rate, None);
        assert_eq!(doc.occupancy_factor, None);
    }

    #[test]
    fn collects_every_violation() {
        let r = raw(json!({
            "node_id": "x", "service_name": "zoo", "display_name": "x",
            "location": {"lat": 43.6, "lon": -79.4}, "rate": 7.0, "occupancy_factor": -0.1
        }));
        let errs = validate_document(&r, &catalog(), &ExtraFieldSchema::default()).unwrap_err();
        assert_eq!(errs.len(), 3);
        assert!(errs.contains(&ValidationError::UnknownService { service: "zoo".into() }));
    }

    #[test]
    fn malformed_location_reported() {
        let r = raw(json!({
            "node_id": "x", "service_name": "dog park", "display_name": "x",
            "location": {"lat": 95.0, "lon": -79.4}
        }));
        let errs = validate_document(&r, &catalog(), &ExtraFieldSchema::default()).unwrap_err();
        assert!(matches!(errs[0], ValidationError::MalformedLocation { .. }));
    }

    #[test]
    fn extra_fields_checked_against_allowlist() {
        let schema = ExtraFieldSchema::default();
        let ok = raw(json!({
            "node_id": "g1", "service_name": "gas station", "display_name": "Esso",
            "location": {"lat": 43.6, "lon": -79.4}, "extra": {"gas_price": 2}
        }));
        let doc = validate_document(&ok, &catalog(), &schema).unwrap();
        assert_eq!(doc.extra["gas_price"], FieldValue::Float(2.0));

        let wrong_service = raw(json!({
            "node_id": "g1", "service_name": "gas station", "display_name": "Esso",
            "location": {"lat": 43.6, "lon": -79.4}, "extra": {"parking_available": true}
        }));
        let errs = validate_document(&wrong_service, &catalog(), &schema).unwrap_err();
        assert!(matches!(errs[0], ValidationError::UnknownExtraField { .. }));

        let wrong_type = raw(json!({
            "node_id": "d1", "service_name": "dog park", "display_name": "x",
            "location": {"lat": 43.6, "lon": -79.4}, "extra": {"lineup_count": -3}
        }));
        let errs = validate_document(&wrong_type, &catalog(), &schema).unwrap_err();
        assert!(matches!(errs[0], ValidationError::ExtraFieldType { .. }));
    }
}
