//! The real-time IoT database: one geo-indexed collection per catalog service.
//!
//! Each collection sits behind its own read/write lock, so writes to one
//! service never block readers of another and a query always sees a single
//! consistent version of every collection it touches. Documents are shared
//! as `Arc`s and replaced whole, which rules out torn reads.

mod clean;
mod grid;
mod persist;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{
    DeviceDocument, ExtraFieldSchema, FieldValue, GeoPoint, ServiceCatalog, ValidationError,
};
use grid::GeoGrid;

pub use clean::{clean_dataset, CleaningReport};
pub use persist::{load_dataset, save_dataset, slug_for, DatasetManifest, LoadedDataset, ManifestService, PersistError};

/// Default bucket edge, roughly 1.1 km of latitude.
pub const DEFAULT_CELL_DEGREES: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no collection for service `{0}`")]
    UnknownCollection(String),
    #[error("document rejected: {0:?}")]
    Invalid(Vec<ValidationError>),
    #[error("node `{0}` not found")]
    NotFound(String),
    #[error("node `{0}` already exists")]
    AlreadyExists(String),
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
}

/// Optional predicates applied to candidate documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DocFilter {
    MinRate { value: f64 },
    /// Absent occupancy counts as uncrowded and passes.
    MaxOccupancy { value: f64 },
    FieldEquals { field: String, value: FieldValue },
    HasField { field: String },
}

impl DocFilter {
    pub fn matches(&self, doc: &DeviceDocument) -> bool {
        match self {
            DocFilter::MinRate { value } => doc.rate.is_some_and(|r| r >= *value),
            DocFilter::MaxOccupancy { value } => doc.occupancy_factor.is_none_or(|o| o <= *value),
            DocFilter::FieldEquals { field, value } => doc.extra.get(field) == Some(value),
            DocFilter::HasField { field } => doc.extra.contains_key(field),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoQuery {
    pub service_names: Vec<String>,
    pub origin: GeoPoint,
    pub limit: usize,
    #[serde(default)]
    pub filters: Vec<DocFilter>,
    #[serde(default)]
    pub max_distance_m: Option<f64>,
}

impl GeoQuery {
    pub fn new(service_names: Vec<String>, origin: GeoPoint, limit: usize) -> Result<Self, StoreError> {
        let q = Self { service_names, origin, limit, filters: Vec::new(), max_distance_m: None };
        q.check()?;
        Ok(q)
    }

    pub fn single(service: &str, origin: GeoPoint, limit: usize) -> Result<Self, StoreError> {
        Self::new(vec![service.to_string()], origin, limit)
    }

    pub fn with_filter(mut self, f: DocFilter) -> Self {
        self.filters.push(f);
        self
    }

    pub fn within(mut self, max_distance_m: f64) -> Self {
        self.max_distance_m = Some(max_distance_m);
        self
    }

    fn check(&self) -> Result<(), StoreError> {
        if self.limit == 0 {
            return Err(StoreError::InvalidQuery("limit must be at least 1"));
        }
        if self.service_names.is_empty() {
            return Err(StoreError::InvalidQuery("service_names must not be empty"));
        }
        Ok(())
    }
}

/// A document with its great-circle distance from the query origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub document: Arc<DeviceDocument>,
    pub distance_m: f64,
}

#[derive(Debug)]
struct CollectionInner {
    docs: HashMap<String, Arc<DeviceDocument>>,
    grid: GeoGrid,
}

impl CollectionInner {
    fn put(&mut self, doc: Arc<DeviceDocument>) -> Option<Arc<DeviceDocument>> {
        let prev = self.docs.insert(doc.node_id.clone(), doc.clone());
        if let Some(p) = &prev {
            self.grid.remove(&p.node_id, &p.location);
        }
        self.grid.insert(&doc.node_id, doc.location);
        prev
    }

    fn take(&mut self, node_id: &str) -> Option<Arc<DeviceDocument>> {
        let prev = self.docs.remove(node_id)?;
        self.grid.remove(node_id, &prev.location);
        Some(prev)
    }

    fn nearest(&self, q: &GeoQuery) -> Vec<Neighbor> {
        let hits = self.grid.nearest(&q.origin, q.limit, |id| {
            q.filters.is_empty() || q.filters.iter().all(|f| f.matches(&self.docs[id]))
        });
        hits.into_iter()
            .filter(|(_, d)| q.max_distance_m.is_none_or(|max| *d <= max))
            .map(|(id, distance_m)| Neighbor { document: self.docs[&id].clone(), distance_m })
            .collect()
    }
}

/// Per-service document set plus its spatial index.
#[derive(Debug)]
pub struct Collection {
    service_name: String,
    inner: RwLock<CollectionInner>,
}

impl Collection {
    fn new(service_name: &str, cell_degrees: f64) -> Self {
        Self {
            service_name: service_name.to_string(),
            inner: RwLock::new(CollectionInner { docs: HashMap::new(), grid: GeoGrid::new(cell_degrees) }),
        }
    }

    pub fn service_name(&self) -> &str {
        &self.service_name
    }

    pub fn len(&self) -> usize {
        self.inner.read().docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node ids in the document map and in the spatial index are the same set.
    pub fn is_coherent(&self) -> bool {
        let inner = self.inner.read();
        let mut a: Vec<&str> = inner.docs.keys().map(String::as_str).collect();
        let mut b: Vec<&str> = inner.grid.node_ids().collect();
        a.sort_unstable();
        b.sort_unstable();
        a == b && inner.grid.len() == inner.docs.len()
    }

    pub fn documents(&self) -> Vec<Arc<DeviceDocument>> {
        let mut docs: Vec<_> = self.inner.read().docs.values().cloned().collect();
        docs.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        docs
    }
}

pub struct DocStore {
    catalog: Arc<ServiceCatalog>,
    schema: ExtraFieldSchema,
    collections: BTreeMap<String, Arc<Collection>>,
    node_service: RwLock<HashMap<String, String>>,
}

impl std::fmt::Debug for DocStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DocStore")
            .field("collections", &self.collections.len())
            .field("documents", &self.len())
            .finish()
    }
}

impl DocStore {
    pub fn new(catalog: Arc<ServiceCatalog>, schema: ExtraFieldSchema) -> Self {
        Self::with_cell_size(catalog, schema, DEFAULT_CELL_DEGREES)
    }

    pub fn with_cell_size(catalog: Arc<ServiceCatalog>, schema: ExtraFieldSchema, cell_degrees: f64) -> Self {
        let collections = catalog
            .names()
            .map(|n| (n.to_string(), Arc::new(Collection::new(n, cell_degrees))))
            .collect();
        Self { catalog, schema, collections, node_service: RwLock::new(HashMap::new()) }
    }

    pub fn catalog(&self) -> &Arc<ServiceCatalog> {
        &self.catalog
    }

    pub fn schema(&self) -> &ExtraFieldSchema {
        &self.schema
    }

    pub fn collection(&self, service: &str) -> Option<&Arc<Collection>> {
        self.collections.get(service)
    }

    pub fn collections(&self) -> impl Iterator<Item = &Arc<Collection>> {
        self.collections.values()
    }

    pub fn len(&self) -> usize {
        self.collections.values().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, doc: &DeviceDocument) -> Result<&Arc<Collection>, StoreError> {
        doc.validate(&self.catalog, &self.schema).map_err(StoreError::Invalid)?;
        self.collections
            .get(&doc.service_name)
            .ok_or_else(|| StoreError::UnknownCollection(doc.service_name.clone()))
    }

    /// Inserts or replaces a document; returns the previous version.
    pub fn upsert(&self, doc: DeviceDocument) -> Result<Option<Arc<DeviceDocument>>, StoreError> {
        let target = self.check(&doc)?.clone();
        let doc = Arc::new(doc);
        let known = self.node_service.read().get(&doc.node_id).cloned();
        if known.as_deref() == Some(doc.service_name.as_str()) {
            return Ok(target.inner.write().put(doc));
        }
        let mut index = self.node_service.write();
        let prev = match index.get(&doc.node_id) {
            Some(old) if *old != doc.service_name => self.collections[old].inner.write().take(&doc.node_id),
            _ => None,
        };
        index.insert(doc.node_id.clone(), doc.service_name.clone());
        let replaced = target.inner.write().put(doc);
        Ok(replaced.or(prev))
    }

    /// Inserts a document only if the node is unknown.
    pub fn insert_new(&self, doc: DeviceDocument) -> Result<Arc<DeviceDocument>, StoreError> {
        let target = self.check(&doc)?.clone();
        let mut index = self.node_service.write();
        if index.contains_key(&doc.node_id) {
            return Err(StoreError::AlreadyExists(doc.node_id));
        }
        let doc = Arc::new(doc);
        index.insert(doc.node_id.clone(), doc.service_name.clone());
        target.inner.write().put(doc.clone());
        Ok(doc)
    }

    /// Atomic read-modify-write of one node under its collection's write lock.
    ///
    /// `f` returns `Ok(None)` to leave the document untouched. The new version
    /// must keep the node's service and pass validation.
    pub fn update<E>(
        &self,
        node_id: &str,
        f: impl FnOnce(&DeviceDocument) -> Result<Option<DeviceDocument>, E>,
    ) -> Result<Result<Arc<DeviceDocument>, E>, StoreError> {
        let service = self
            .node_service
            .read()
            .get(node_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(node_id.to_string()))?;
        let collection = &self.collections[&service];
        let mut inner = collection.inner.write();
        let current = inner.docs.get(node_id).cloned().ok_or_else(|| StoreError::NotFound(node_id.to_string()))?;
        match f(&current) {
            Err(e) => Ok(Err(e)),
            Ok(None) => Ok(Ok(current)),
            Ok(Some(next)) => {
                if next.service_name != service || next.node_id != node_id {
                    return Err(StoreError::Invalid(vec![ValidationError::ImmutableField {
                        field: if next.node_id != node_id { "node_id".into() } else { "service_name".into() },
                    }]));
                }
                next.validate(&self.catalog, &self.schema).map_err(StoreError::Invalid)?;
                let next = Arc::new(next);
                inner.put(next.clone());
                Ok(Ok(next))
            }
        }
    }

    pub fn get(&self, node_id: &str) -> Option<Arc<DeviceDocument>> {
        let service = self.node_service.read().get(node_id).cloned()?;
        self.collections[&service].inner.read().docs.get(node_id).cloned()
    }

    pub fn remove(&self, node_id: &str) -> Option<Arc<DeviceDocument>> {
        let mut index = self.node_service.write();
        let service = index.remove(node_id)?;
        self.collections[&service].inner.write().take(node_id)
    }

    /// The `limit` documents nearest to `origin` across the named collections,
    /// ascending by great-circle distance, ties broken by node id.
    pub fn nearest(&self, q: &GeoQuery) -> Result<Vec<Neighbor>, StoreError> {
        q.check()?;
        let mut targets = Vec::with_capacity(q.service_names.len());
        for name in &q.service_names {
            let c = self
                .collections
                .get(name)
                .ok_or_else(|| StoreError::UnknownCollection(name.clone()))?;
            if !targets.iter().any(|t: &&Arc<Collection>| t.service_name == *name) {
                targets.push(c);
            }
        }
        let mut merged: Vec<Neighbor> = targets.iter().flat_map(|c| c.inner.read().nearest(q)).collect();
        merged.sort_by(|a, b| {
            a.distance_m
                .total_cmp(&b.distance_m)
                .then_with(|| a.document.node_id.cmp(&b.document.node_id))
        });
        merged.truncate(q.limit);
        Ok(merged)
    }

    /// Every document, ordered by (service, node id).
    pub fn documents(&self) -> Vec<Arc<DeviceDocument>> {
        self.collections.values().flat_map(|c| c.documents()).collect()
    }

    /// SHA-256 over the canonical encoding of every document.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for doc in self.documents() {
            h.update(serde_json::to_vec(doc.as_ref()).expect("documents serialize"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn load<I: IntoIterator<Item = DeviceDocument>>(&self, docs: I) -> Result<usize, StoreError> {
        let mut n = 0;
        for d in docs {
            self.upsert(d)?;
            n += 1;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::ServiceDescriptor;
    use chrono::{TimeZone, Utc};

    fn store() -> DocStore {
        let catalog = ServiceCatalog::new(vec![
            ServiceDescriptor::new("s1", "dog park", "Parks for dogs.").unwrap(),
            ServiceDescriptor::new("s2", "gym", "Exercise.").unwrap(),
        ])
        .unwrap();
        DocStore::new(Arc::new(catalog), ExtraFieldSchema::default())
    }

    fn doc(id: &str, service: &str, lat: f64, lon: f64) -> DeviceDocument {
        DeviceDocument {
            node_id: id.into(),
            service_name: service.into(),
            display_name: id.to_uppercase(),
            address: String::new(),
            location: GeoPoint::new(lat, lon).unwrap(),
            rate: Some(4.0),
            occupancy_factor: None,
            extra: Default::default(),
            updated_at: Utc.with_ymd_and_hms(2024, 10, 1, 12, 0, 0).unwrap(),
        }
    }

    fn origin() -> GeoPoint {
        GeoPoint::new(43.70, -79.40).unwrap()
    }

    #[test]
    fn read_your_write() {
        let s = store();
        let d = doc("a", "dog park", 43.7, -79.4);
        assert!(s.upsert(d.clone()).unwrap().is_none());
        assert_eq!(*s.get("a").unwrap(), d);
    }

    #[test]
    fn unknown_service_rejected() {
        let s = store();
        let err = s.upsert(doc("a", "zoo", 43.7, -79.4)).unwrap_err();
        assert!(matches!(err, StoreError::Invalid(_)));
    }

    #[test]
    fn moved_document_reflected_immediately() {
        let s = store();
        s.upsert(doc("near", "dog park", 43.701, -79.40)).unwrap();
        s.upsert(doc("far", "dog park", 43.75, -79.40)).unwrap();
        let q = GeoQuery::single("dog park", origin(), 1).unwrap();
        assert_eq!(s.nearest(&q).unwrap()[0].document.node_id, "near");
        s.upsert(doc("far", "dog park", 43.7001, -79.40)).unwrap();
        let got = s.nearest(&q).unwrap();
        assert_eq!(got[0].document.node_id, "far");
        let expected = origin().distance_m(&GeoPoint::new(43.7001, -79.40).unwrap());
        assert_eq!(got[0].distance_m, expected);
    }

    #[test]
    fn delete_then_absent() {
        let s = store();
        s.upsert(doc("a", "dog park", 43.7, -79.4)).unwrap();
        assert!(s.remove("a").is_some());
        let q = GeoQuery::single("dog park", origin(), 3).unwrap();
        assert!(s.nearest(&q).unwrap().is_empty());
        assert!(s.get("a").is_none());
    }

    #[test]
    fn limit_larger_than_collection_returns_all_sorted() {
        let s = store();
        for (i, lat) in [43.73, 43.71, 43.72].iter().enumerate() {
            s.upsert(doc(&format!("d{i}"), "dog park", *lat, -79.4)).unwrap();
        }
        let q = GeoQuery::single("dog park", origin(), 10).unwrap();
        let ids: Vec<_> = s.nearest(&q).unwrap().iter().map(|n| n.document.node_id.clone()).collect();
        assert_eq!(ids, ["d1", "d2", "d0"]);
    }

    #[test]
    fn equal_distances_tie_break_on_node_id() {
        let s = store();
        s.upsert(doc("b", "dog park", 43.71, -79.40)).unwrap();
        s.upsert(doc("a", "dog park", 43.71, -79.40)).unwrap();
        let q = GeoQuery::single("dog park", origin(), 1).unwrap();
        assert_eq!(s.nearest(&q).unwrap()[0].document.node_id, "a");
    }

    #[test]
    fn query_spans_collections_and_rejects_unknown() {
        let s = store();
        s.upsert(doc("p", "dog park", 43.72, -79.4)).unwrap();
        s.upsert(doc("g", "gym", 43.71, -79.4)).unwrap();
        let q = GeoQuery::new(vec!["dog park".into(), "gym".into()], origin(), 5).unwrap();
        let got = s.nearest(&q).unwrap();
        assert_eq!(got[0].document.node_id, "g");
        assert_eq!(got.len(), 2);
        let bad = GeoQuery::single("zoo", origin(), 1).unwrap();
        assert!(matches!(s.nearest(&bad), Err(StoreError::UnknownCollection(_))));
        assert!(GeoQuery::new(vec![], origin(), 1).is_err());
        assert!(GeoQuery::single("gym", origin(), 0).is_err());
    }

    #[test]
    fn filters_and_radius() {
        let s = store();
        let mut busy = doc("busy", "dog park", 43.701, -79.4);
        busy.occupancy_factor = Some(0.9);
        s.upsert(busy).unwrap();
        s.upsert(doc("quiet", "dog park", 43.75, -79.4)).unwrap();
        let q = GeoQuery::single("dog park", origin(), 1)
            .unwrap()
            .with_filter(DocFilter::MaxOccupancy { value: 0.5 });
        assert_eq!(s.nearest(&q).unwrap()[0].document.node_id, "quiet");
        let q = GeoQuery::single("dog park", origin(), 5).unwrap().within(500.0);
        assert_eq!(s.nearest(&q).unwrap().len(), 1);
    }

    #[test]
    fn service_change_moves_collection() {
        let s = store();
        s.upsert(doc("a", "dog park", 43.7, -79.4)).unwrap();
        let prev = s.upsert(doc("a", "gym", 43.7, -79.4)).unwrap();
        assert_eq!(prev.unwrap().service_name, "dog park");
        assert_eq!(s.collection("dog park").unwrap().len(), 0);
        assert_eq!(s.collection("gym").unwrap().len(), 1);
        assert!(s.collections().all(|c| c.is_coherent()));
    }

    #[test]
    fn update_is_atomic_and_guards_service() {
        let s = store();
        s.upsert(doc("a", "dog park", 43.7, -79.4)).unwrap();
        let out = s
            .update("a", |cur| {
                let mut next = cur.clone();
                next.occupancy_factor = Some(0.4);
                Ok::<_, ()>(Some(next))
            })
            .unwrap()
            .unwrap();
        assert_eq!(out.occupancy_factor, Some(0.4));
        let err = s.update("a", |cur| {
            let mut next = cur.clone();
            next.service_name = "gym".into();
            Ok::<_, ()>(Some(next))
        });
        assert!(matches!(err, Err(StoreError::Invalid(_))));
        assert!(matches!(s.update("zz", |_| Ok::<_, ()>(None)), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn content_hash_tracks_changes() {
        let s = store();
        s.upsert(doc("a", "dog park", 43.7, -79.4)).unwrap();
        let h1 = s.content_hash();
        assert_eq!(h1, s.content_hash());
        s.upsert(doc("a", "dog park", 43.71, -79.4)).unwrap();
        assert_ne!(h1, s.content_hash());
    }
}
