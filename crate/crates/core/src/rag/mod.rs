//! Retrieval for the IoT source: embed the query, pick the top services from
//! the description index, fetch the nearest live documents from their
//! collections, then attach travel times.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    format_travel_time, service_type_label, DeviceDocument, FieldValue, GeoPoint, PresentedDocument, ServiceCatalog,
    Timestamp,
};
use crate::docstore::{DocStore, GeoQuery, Neighbor, StoreError};
use crate::embedder::{EmbedError, Embedder};
use crate::providers::{PlaceDocument, RoutingProvider, WebSnippet};
use crate::vector_index::{HnswIndex, IndexError, IndexHandle, IndexParams, SearchHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    /// Documents from the best-matching service only, falling through to the
    /// next service when a collection has nothing in range.
    #[default]
    Rank1Only,
    /// One merged nearest search across all matched services.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub k_services: usize,
    pub k_documents: usize,
    pub context_policy: ContextPolicy,
    /// Documents farther than this are never retrieved.
    pub max_distance_m: Option<f64>,
    pub routing_deadline_ms: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k_services: 3,
            k_documents: 3,
            context_policy: ContextPolicy::Rank1Only,
            max_distance_m: None,
            routing_deadline_ms: 2000,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), RagError> {
        if self.k_services == 0 || self.k_documents == 0 {
            return Err(RagError::InvalidConfig("k_services and k_documents must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RagError {
    #[error("the service index is empty")]
    EmptyIndex,
    #[error("embedding failed: {0}")]
    Embed(#[from] EmbedError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("store: {0}")]
    Store(String),
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
}

impl From<StoreError> for RagError {
    fn from(e: StoreError) -> Self {
        RagError::Store(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    IotRagSe,
    Maps,
    Web,
}

/// A place as handed to the generator, whatever its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    pub service_name: String,
    pub display_name: String,
    pub address: String,
    pub location: GeoPoint,
    pub rate: Option<f64>,
    pub occupancy_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, FieldValue>,
    pub distance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updated_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_attribution: Option<String>,
}

impl ContextDocument {
    pub fn from_document(doc: &DeviceDocument, distance_m: f64) -> Self {
        Self {
            node_id: Some(doc.node_id.clone()),
            service_name: doc.service_name.clone(),
            display_name: doc.display_name.clone(),
            address: doc.address.clone(),
            location: doc.location,
            rate: doc.rate,
            occupancy_factor: doc.occupancy_factor,
            extra: doc.extra.clone(),
            distance_m,
            travel_time_s: None,
            route_distance_m: None,
            updated_at: Some(doc.updated_at),
            source_attribution: None,
        }
    }

    pub fn from_place(place: &PlaceDocument, service_name: &str, origin: GeoPoint) -> Self {
        Self {
            node_id: None,
            service_name: service_name.to_string(),
            display_name: place.name.clone(),
            address: place.address.clone(),
            location: place.location,
            rate: place.rate,
            occupancy_factor: None,
            extra: BTreeMap::new(),
            distance_m: origin.distance_m(&place.location),
            travel_time_s: None,
            route_distance_m: None,
            updated_at: None,
            source_attribution: Some(place.source_attribution.clone()),
        }
    }

    pub fn presented(&self) -> PresentedDocument {
        PresentedDocument {
            service_type: service_type_label(&self.service_name),
            service_name: self.display_name.clone(),
            service_address: self.address.clone(),
            rate: self.rate,
            occupancy_factor: self.occupancy_factor,
            travel_time: self.travel_time_s.map(format_travel_time),
            distance: Some(format!("{:.1} km", self.route_distance_m.unwrap_or(self.distance_m) / 1000.0)),
            extra: self.extra.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub source: ContextSource,
    pub query: String,
    pub origin: GeoPoint,
    pub matched_services: Vec<SearchHit>,
    pub documents: Vec<ContextDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snippets: Vec<WebSnippet>,
    /// Routing failed or timed out; documents carry distances only.
    #[serde(default)]
    pub unrouted: bool,
    #[serde(default)]
    pub fixture_miss: bool,
}

impl RetrievedContext {
    pub fn is_empty(&self) -> bool {
        self.documents.is_empty() && self.snippets.is_empty()
    }
}

/// Embeds every catalog description (precomputed embeddings are used as is)
/// and inserts them in catalog order.
pub fn index_catalog(catalog: &ServiceCatalog, embedder: &dyn Embedder, params: IndexParams) -> Result<HnswIndex, RagError> {
    let services = catalog.services();
    let pending: Vec<&str> =
        services.iter().filter(|s| s.embedding.is_none()).map(|s| s.description.as_str()).collect();
    let mut fresh = embed_parallel(embedder, &pending)?.into_iter();
    let mut entries = Vec::with_capacity(services.len());
    for s in services {
        let v = match &s.embedding {
            Some(v) => v.clone(),
            None => fresh.next().expect("one embedding per pending description"),
        };
        entries.push((s.name.clone(), v));
    }
    let dimension = entries.first().map_or(embedder.info().dimension.max(1), |(_, v)| v.len());
    Ok(HnswIndex::build(dimension, params, entries)?)
}

/// Batch embedding over scoped worker threads, preserving input order.
pub fn embed_parallel(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    if texts.len() < 16 || workers == 1 {
        return embedder.embed_batch(texts);
    }
    let chunk = texts.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = texts.chunks(chunk).map(|c| s.spawn(move || embedder.embed_batch(c))).collect();
        let mut out = Vec::with_capacity(texts.len());
        for h in handles {
            out.extend(h.join().expect("embedding worker panicked")?);
        }
        Ok(out)
    })
}

/// Annotates documents with travel time and road distance from one matrix
/// call. Returns `false` (documents untouched) if routing fails or misses
/// the deadline.
pub fn enrich_travel(
    router: &Arc<dyn RoutingProvider>,
    documents: &mut [ContextDocument],
    origin: GeoPoint,
    deadline: Duration,
) -> bool {
    if documents.is_empty() {
        return true;
    }
    let dests: Vec<GeoPoint> = documents.iter().map(|d| d.location).collect();
    let (tx, rx) = mpsc::channel();
    let r = router.clone();
    std::thread::spawn(move || {
        let _ = tx.send(r.matrix(origin, &dests));
    });
    match rx.recv_timeout(deadline) {
        Ok(Ok(m)) => {
            for (i, d) in documents.iter_mut().enumerate() {
                d.travel_time_s = Some(m.durations_s[i]);
                d.route_distance_m = Some(m.distances_m[i]);
            }
            true
        }
        Ok(Err(e)) => {
            tracing::warn!(error = %e, "routing failed; returning distances only");
            false
        }
        Err(_) => {
            tracing::warn!(?deadline, "routing deadline exceeded");
            false
        }
    }
}

pub struct RagEngine {
    embedder: Arc<dyn Embedder>,
    index: Arc<IndexHandle>,
    store: Arc<DocStore>,
    router: Arc<dyn RoutingProvider>,
}

impl RagEngine {
    pub fn new(
        embedder: Arc<dyn Embedder>,
        index: Arc<IndexHandle>,
        store: Arc<DocStore>,
        router: Arc<dyn RoutingProvider>,
    ) -> Self {
        Self { embedder, index, store, router }
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn index(&self) -> &Arc<IndexHandle> {
        &self.index
    }

    pub fn store(&self) -> &Arc<DocStore> {
        &self.store
    }

    pub fn router(&self) -> &Arc<dyn RoutingProvider> {
        &self.router
    }

    /// Top-`k` catalog services for the query text.
    pub fn semantic_route(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RagError> {
        let index = self.index.load();
        if index.is_empty() {
            return Err(RagError::EmptyIndex);
        }
        let q = self.embedder.embed_text(query)?;
        if q.len() != index.dimension() {
            return Err(RagError::Index(IndexError::DimensionMismatch { expected: index.dimension(), got: q.len() }));
        }
        Ok(index.search(&q, k))
    }

    /// Nearest documents for already-chosen services, before enrichment.
    pub fn collect_documents(
        &self,
        services: &[SearchHit],
        origin: GeoPoint,
        cfg: &SearchConfig,
    ) -> Result<Vec<ContextDocument>, RagError> {
        let query = |names: Vec<String>| -> Result<Vec<Neighbor>, RagError> {
            let mut q = GeoQuery::new(names, origin, cfg.k_documents)?;
            if let Some(max) = cfg.max_distance_m {
                q = q.within(max);
            }
            Ok(self.store.nearest(&q)?)
        };
        let known: Vec<&SearchHit> = services.iter().filter(|s| self.store.collection(&s.name).is_some()).collect();
        let neighbors = match cfg.context_policy {
            ContextPolicy::Rank1Only => {
                let mut found = Vec::new();
                for s in &known {
                    found = query(vec![s.name.clone()])?;
                    if !found.is_empty() {
                        break;
                    }
                }
                found
            }
            ContextPolicy::Mixed if known.is_empty() => Vec::new(),
            ContextPolicy::Mixed => query(known.iter().map(|s| s.name.clone()).collect())?,
        };
        Ok(neighbors.iter().map(|n| ContextDocument::from_document(&n.document, n.distance_m)).collect())
    }

    pub fn retrieve(&self, query: &str, origin: GeoPoint, cfg: &SearchConfig) -> Result<RetrievedContext, RagError> {
        cfg.check()?;
        let matched = self.semantic_route(query, cfg.k_services)?;
        self.retrieve_for(query, matched, origin, cfg)
    }

    /// Retrieval with the service list fixed by the caller.
    pub fn retrieve_for(
        &self,
        query: &str,
        matched: Vec<SearchHit>,
        origin: GeoPoint,
        cfg: &SearchConfig,
    ) -> Result<RetrievedContext, RagError> {
        let mut documents = self.collect_documents(&matched, origin, cfg)?;
        let routed = enrich_travel(&self.router, &mut documents, origin, Duration::from_millis(cfg.routing_deadline_ms));
        Ok(RetrievedContext {
            source: ContextSource::IotRagSe,
            query: query.to_string(),
            origin,
            matched_services: matched,
            documents,
            snippets: Vec::new(),
            unrouted: !routed,
            fixture_miss: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{ExtraFieldSchema, ServiceDescriptor};
    use crate::embedder::hashed_embedder;
    use crate::error::ProviderError;
    use crate::providers::{FixtureRouter, FixtureStore, Matrix, SyntheticRouter};
    use chrono::{TimeZone, Utc};

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn doc(id: &str, service: &str, name: &str, at: GeoPoint) -> DeviceDocument {
        DeviceDocument {
            node_id: id.into(),
            service_name: service.into(),
            display_name: name.into(),
            address: "Toronto, ON, Canada".into(),
            location: at,
            rate: Some(4.5),
            occupancy_factor: Some(0.3),
            extra: Default::default(),
            updated_at: Utc.with_ymd_and_hms(2024, 10, 1, 12, 0, 0).unwrap(),
        }
    }

    fn engine(router: Arc<dyn RoutingProvider>) -> RagEngine {
        let catalog = ServiceCatalog::new(vec![
            ServiceDescriptor::new("1", "dog park", "A dog park is a fenced area where dogs play off leash.").unwrap(),
            ServiceDescriptor::new("2", "tax accountant", "A tax accountant prepares income tax returns.").unwrap(),
            ServiceDescriptor::new("3", "dog walker", "A dog walker takes dogs out for walks.").unwrap(),
        ])
        .unwrap();
        let embedder: Arc<dyn Embedder> = Arc::new(hashed_embedder());
        let index = index_catalog(&catalog, embedder.as_ref(), IndexParams::default()).unwrap();
        let store = Arc::new(DocStore::new(Arc::new(catalog), ExtraFieldSchema::default()));
        store
            .load([
                doc("winston", "dog park", "Winston Churchill Park", p(43.6830, -79.4130)),
                doc("ramsden", "dog park", "Ramsden Park", p(43.6777, -79.3905)),
                doc("cedarvale", "dog park", "Cedarvale Park", p(43.6923, -79.4288)),
                doc("far", "dog park", "Far Park", p(43.80, -79.20)),
                doc("walker1", "dog walker", "Walk Co", p(43.6791, -79.4061)),
            ])
            .unwrap();
        RagEngine::new(embedder, Arc::new(IndexHandle::new(index)), store, router)
    }

    struct Failing;
    impl RoutingProvider for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn matrix(&self, _: GeoPoint, _: &[GeoPoint]) -> Result<Matrix, ProviderError> {
            Err(ProviderError::Unavailable("down".into()))
        }
    }

    struct Slow;
    impl RoutingProvider for Slow {
        fn name(&self) -> &str {
            "slow"
        }
        fn matrix(&self, o: GeoPoint, d: &[GeoPoint]) -> Result<Matrix, ProviderError> {
            std::thread::sleep(Duration::from_millis(300));
            SyntheticRouter::default().matrix(o, d)
        }
    }

    const ORIGIN: (f64, f64) = (43.6790, -79.4060);

    #[test]
    fn dog_park_context_has_fixture_travel_times() {
        let e = engine(Arc::new(FixtureRouter::new(FixtureStore::bundled())));
        let ctx = e.retrieve("dog park", p(ORIGIN.0, ORIGIN.1), &SearchConfig::default()).unwrap();
        assert_eq!(ctx.matched_services[0].name, "dog park");
        let names: Vec<_> = ctx.documents.iter().map(|d| d.display_name.as_str()).collect();
        assert_eq!(names, ["Winston Churchill Park", "Ramsden Park", "Cedarvale Park"]);
        let minutes: Vec<_> = ctx.documents.iter().map(|d| d.presented().travel_time.unwrap()).collect();
        assert_eq!(minutes, ["7 min", "9 min", "10 min"]);
        assert!(!ctx.unrouted);
    }

    #[test]
    fn retrieval_equals_store_nearest() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        let origin = p(43.70, -79.40);
        let ctx = e.retrieve("dog park", origin, &SearchConfig::default()).unwrap();
        let oracle = e.store().nearest(&GeoQuery::single("dog park", origin, 3).unwrap()).unwrap();
        let got: Vec<_> = ctx.documents.iter().map(|d| d.node_id.clone().unwrap()).collect();
        let want: Vec<_> = oracle.iter().map(|n| n.document.node_id.clone()).collect();
        assert_eq!(got, want);
        for d in &ctx.documents {
            assert!(ctx.matched_services.iter().any(|s| s.name == d.service_name));
        }
    }

    #[test]
    fn routing_failure_and_timeout_degrade() {
        let origin = p(ORIGIN.0, ORIGIN.1);
        let e = engine(Arc::new(Failing));
        let ctx = e.retrieve("dog park", origin, &SearchConfig::default()).unwrap();
        assert!(ctx.unrouted);
        assert_eq!(ctx.documents.len(), 3);
        assert!(ctx.documents.iter().all(|d| d.travel_time_s.is_none()));

        let e = engine(Arc::new(Slow));
        let cfg = SearchConfig { routing_deadline_ms: 50, ..SearchConfig::default() };
        assert!(e.retrieve("dog park", origin, &cfg).unwrap().unrouted);
    }

    #[test]
    fn identity_trip() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        let at = p(43.6830, -79.4130);
        let ctx = e.retrieve("dog park", at, &SearchConfig { k_documents: 1, ..SearchConfig::default() }).unwrap();
        assert_eq!(ctx.documents[0].distance_m, 0.0);
        assert_eq!(ctx.documents[0].travel_time_s, Some(0.0));
    }

    #[test]
    fn empty_radius_falls_through_then_empties() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        let cfg = SearchConfig { max_distance_m: Some(50.0), ..SearchConfig::default() };
        // Only the dog walker sits within 50 m of the origin.
        let ctx = e.retrieve("dog park", p(ORIGIN.0, ORIGIN.1), &cfg).unwrap();
        assert_eq!(ctx.documents.len(), 1);
        assert_eq!(ctx.documents[0].service_name, "dog walker");
        let ctx = e.retrieve("dog park", p(-33.9, 151.2), &cfg).unwrap();
        assert!(ctx.documents.is_empty());
    }

    #[test]
    fn mixed_policy_merges_services() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        let cfg = SearchConfig { context_policy: ContextPolicy::Mixed, ..SearchConfig::default() };
        let ctx = e.retrieve("dog park", p(ORIGIN.0, ORIGIN.1), &cfg).unwrap();
        assert_eq!(ctx.documents[0].node_id.as_deref(), Some("walker1"));
        assert!(ctx.documents.len() <= cfg.k_documents);
    }

    #[test]
    fn verbatim_description_is_rank_one_and_names_exist() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        let hits = e.semantic_route("A tax accountant prepares income tax returns.", 3).unwrap();
        assert_eq!(hits[0].name, "tax accountant");
        assert!(hits.iter().all(|h| e.store().catalog().contains(&h.name)));
    }

    #[test]
    fn deterministic_contexts() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        let a = e.retrieve("dog park near me", p(43.68, -79.41), &SearchConfig::default()).unwrap();
        let b = e.retrieve("dog park near me", p(43.68, -79.41), &SearchConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_index_errors() {
        let e = engine(Arc::new(SyntheticRouter::default()));
        e.index().publish(HnswIndex::new(256, IndexParams::default()).unwrap());
        assert_eq!(e.semantic_route("dog", 3), Err(RagError::EmptyIndex));
    }
}
