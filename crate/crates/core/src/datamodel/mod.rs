//! Shared value types: the region → service → node → node-data hierarchy.
//!
//! Regions partition space into coverage zones, services name the kinds of
//! places (and double as collection names), and every physical place is a
//! [`DeviceDocument`] carrying its latest sensed values.

mod document;
mod geo;
mod presentation;
mod uidi;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use document::{
    validate_document, DeviceDocument, ExtraFieldSchema, FieldKind, FieldValue, Timestamp,
    ValidationError,
};
pub use geo::{haversine_m, BoundingBox, GeoPoint, EARTH_RADIUS_M};
pub(crate) use document::parse_location;
pub use presentation::{format_travel_time, parse_travel_time, service_type_label, PresentedDocument};
pub use uidi::{Topic, UidiMessage};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("coordinate is NaN or infinite")]
    NonFiniteCoordinate,
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("bounding box min exceeds max")]
    InvertedBounds,
    #[error("service name is empty")]
    EmptyServiceName,
    #[error("service `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("duplicate service names: {0:?}")]
    DuplicateServices(Vec<String>),
    #[error("embedding for `{0}` is not unit norm")]
    NonUnitEmbedding(String),
}

/// Lower-cases and collapses runs of whitespace: `"  Dog   Park "` → `"dog park"`.
pub fn canonical_service_name(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A spatial coverage zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub name: String,
    pub bounds: BoundingBox,
    #[serde(default)]
    pub service_ids: BTreeSet<String>,
}

impl Region {
    pub fn new(region_id: impl Into<String>, name: impl Into<String>, bounds: BoundingBox) -> Self {
        Self {
            region_id: region_id.into(),
            name: name.into(),
            bounds,
            service_ids: BTreeSet::new(),
        }
    }

    /// Greater Toronto bounds used by the bundled datasets.
    pub fn toronto() -> Self {
        let bounds = BoundingBox::new(
            GeoPoint::new(43.58, -79.64).expect("static"),
            GeoPoint::new(43.86, -79.12).expect("static"),
        )
        .expect("static");
        Self::new("toronto", "Toronto", bounds)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.bounds.contains(p)
    }
}

pub fn region_contains(region: &Region, p: &GeoPoint) -> bool {
    region.contains(p)
}

/// A kind of service together with the description that gets embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_id: String,
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl ServiceDescriptor {
    pub fn new(
        service_id: impl Into<String>,
        name: &str,
        description: impl Into<String>,
    ) -> Result<Self, DataError> {
        let name = canonical_service_name(name);
        if name.is_empty() {
            return Err(DataError::EmptyServiceName);
        }
        let description = description.into();
        if description.trim().is_empty() {
            return Err(DataError::EmptyDescription(name));
        }
        Ok(Self {
            service_id: service_id.into(),
            name,
            description,
            embedding: None,
        })
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Result<Self, DataError> {
        let norm = embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DataError::NonUnitEmbedding(self.name));
        }
        self.embedding = Some(embedding);
        Ok(self)
    }
}

/// The ordered set of services; names are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServiceCatalog {
    services: Vec<ServiceDescriptor>,
    by_name: HashMap<String, usize>,
}

impl ServiceCatalog {
    pub fn new(services: Vec<ServiceDescriptor>) -> Result<Self, DataError> {
        let mut by_name = HashMap::with_capacity(services.len());
        let mut dups = BTreeSet::new();
        for (i, s) in services.iter().enumerate() {
            if s.name.is_empty() || s.name != canonical_service_name(&s.name) {
                return Err(DataError::EmptyServiceName);
            }
            if by_name.insert(s.name.clone(), i).is_some() {
                dups.insert(s.name.clone());
            }
        }
        if !dups.is_empty() {
            return Err(DataError::DuplicateServices(dups.into_iter().collect()));
        }
        Ok(Self { services, by_name })
    }

    pub fn get(&self, name: &str) -> Option<&ServiceDescriptor> {
        self.by_name.get(name).map(|&i| &self.services[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ServiceDescriptor> {
        self.services.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.services.iter().map(|s| s.name.as_str())
    }

    pub fn services(&self) -> &[ServiceDescriptor] {
        &self.services
    }

    pub fn into_services(self) -> Vec<ServiceDescriptor> {
        self.services
    }
}

impl Serialize for ServiceCatalog {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.services.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ServiceCatalog {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let services = Vec::<ServiceDescriptor>::deserialize(d)?;
        ServiceCatalog::new(services).map_err(serde::de::Error::custom)
    }
}
