//! Wires the catalog, document store, vector index, providers and agent
//! loop into one shareable service object. The HTTP server and the CLI are
//! thin layers over this.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, HttpLlm, LlmProvider, MockLlm, PromptSet, QueryOutcome, RetrieverSet, Trace, Workflow};
use crate::config::{Config, ProvidersConfig};
use crate::datamodel::{DeviceDocument, ExtraFieldSchema, GeoPoint, Region, ServiceCatalog};
use crate::dataset::scenario_dataset;
use crate::docstore::{load_dataset, DocStore, GeoQuery, StoreError};
use crate::embedder::{build_embedder, Embedder};
use crate::ingest::{IngestReport, Ingestor};
use crate::providers::{
    FallbackRouter, FixtureMaps, FixtureRouter, FixtureStore, FixtureWeb, GooglePlaces, MapsProvider, OrsRouter,
    RoutingProvider, SyntheticRouter, TavilySearch, WebProvider,
};
use crate::rag::{index_catalog, ContextDocument, RagEngine};
use crate::vector_index::{HnswIndex, IndexHandle};

/// Everything needed to stand up an engine, whichever way it was obtained.
#[derive(Debug, Clone)]
pub struct DatasetParts {
    pub catalog: ServiceCatalog,
    pub regions: Vec<Region>,
    pub field_schema: ExtraFieldSchema,
    pub documents: Vec<DeviceDocument>,
}

impl From<crate::dataset::GeneratedDataset> for DatasetParts {
    fn from(d: crate::dataset::GeneratedDataset) -> Self {
        Self { catalog: d.catalog, regions: d.regions, field_schema: d.field_schema, documents: d.documents }
    }
}

impl From<crate::docstore::LoadedDataset> for DatasetParts {
    fn from(d: crate::docstore::LoadedDataset) -> Self {
        Self { catalog: d.catalog, regions: d.regions, field_schema: d.field_schema, documents: d.documents }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub catalog_size: usize,
    pub collections: usize,
    pub documents: usize,
    pub index_size: usize,
    pub snapshot_hash: String,
    pub embedder: String,
    pub llm: String,
}

/// The most recent traces, oldest evicted first.
pub struct TraceRing {
    capacity: usize,
    traces: Mutex<VecDeque<Trace>>,
}

impl TraceRing {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), traces: Mutex::new(VecDeque::new()) }
    }

    pub fn push(&self, trace: Trace) {
        let mut q = self.traces.lock();
        // Identical runs share an id; keep one copy.
        q.retain(|t| t.id != trace.id);
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(trace);
    }

    pub fn get(&self, id: &str) -> Option<Trace> {
        self.traces.lock().iter().rev().find(|t| t.id == id).cloned()
    }

    pub fn len(&self) -> usize {
        self.traces.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One JSON trace per line, oldest first.
    pub fn dump(&self, path: &Path) -> std::io::Result<usize> {
        let traces: Vec<Trace> = self.traces.lock().iter().cloned().collect();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &traces {
            serde_json::to_writer(&mut f, t)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(traces.len())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("index: {0}")]
    Index(String),
    #[error("provider setup: {0}")]
    Provider(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("store: {0}")]
    Store(#[from] StoreError),
}

pub struct Engine {
    config: Config,
    embedder: Arc<dyn Embedder>,
    store: Arc<DocStore>,
    index: Arc<IndexHandle>,
    rag: Arc<RagEngine>,
    ingestor: Ingestor,
    workflow: Workflow,
    traces: TraceRing,
    reindex_lock: Mutex<()>,
    hash_cache: Mutex<Option<(usize, String)>>,
}

fn provider_err(e: impl std::fmt::Display) -> EngineError {
    EngineError::Provider(e.to_string())
}

fn build_router(p: &ProvidersConfig, fixtures: &FixtureStore) -> Result<Arc<dyn RoutingProvider>, EngineError> {
    let fixture = || Box::new(FixtureRouter::new(fixtures.clone()));
    Ok(match p.routing.as_str() {
        "fixture+synthetic" => Arc::new(FallbackRouter::new(fixture(), Box::new(SyntheticRouter::default()))),
        "fixture" => Arc::new(FixtureRouter::new(fixtures.clone())),
        "synthetic" => Arc::new(SyntheticRouter::default()),
        "ors" => {
            let live = Box::new(OrsRouter::from_env().map_err(provider_err)?);
            if p.record {
                Arc::new(FixtureRouter::recording(fixtures.clone(), live))
            } else {
                Arc::new(FallbackRouter::new(live, Box::new(SyntheticRouter::default())))
            }
        }
        other => return Err(EngineError::Provider(format!("unknown routing provider `{other}`"))),
    })
}

fn build_maps(p: &ProvidersConfig, fixtures: &FixtureStore) -> Result<Arc<dyn MapsProvider>, EngineError> {
    Ok(match p.maps.as_str() {
        "fixture" => Arc::new(FixtureMaps::new(fixtures.clone())),
        "google" => {
            let live = GooglePlaces::from_env().map_err(provider_err)?;
            if p.record {
                Arc::new(FixtureMaps::recording(fixtures.clone(), Box::new(live)))
            } else {
                Arc::new(live)
            }
        }
        other => return Err(EngineError::Provider(format!("unknown maps provider `{other}`"))),
    })
}

fn build_web(p: &ProvidersConfig, fixtures: &FixtureStore) -> Result<Arc<dyn WebProvider>, EngineError> {
    Ok(match p.web.as_str() {
        "fixture" => Arc::new(FixtureWeb::new(fixtures.clone())),
        "tavily" => {
            let live = TavilySearch::from_env().map_err(provider_err)?;
            if p.record {
                Arc::new(FixtureWeb::recording(fixtures.clone(), Box::new(live)))
            } else {
                Arc::new(live)
            }
        }
        other => return Err(EngineError::Provider(format!("unknown web provider `{other}`"))),
    })
}

fn build_llm(p: &ProvidersConfig) -> Result<Arc<dyn LlmProvider>, EngineError> {
    Ok(match p.llm.as_str() {
        "mock" => Arc::new(MockLlm),
        "http" => Arc::new(HttpLlm::from_env().map_err(provider_err)?),
        other => return Err(EngineError::Provider(format!("unknown llm provider `{other}`"))),
    })
}

/// Loads the configured snapshot when it indexes exactly this catalog at the
/// embedder's dimension; otherwise builds a fresh index.
pub fn load_or_build_index(
    config: &Config,
    catalog: &ServiceCatalog,
    embedder: &dyn Embedder,
) -> Result<HnswIndex, EngineError> {
    if let Some(path) = config.index_path.as_deref().filter(|p| p.exists()) {
        let idx = HnswIndex::read_snapshot(path).map_err(|e| EngineError::Index(e.to_string()))?;
        let mut have: Vec<&str> = idx.names().iter().map(String::as_str).collect();
        let mut want: Vec<&str> = catalog.services().iter().map(|s| s.name.as_str()).collect();
        have.sort_unstable();
        want.sort_unstable();
        if have == want && idx.dimension() == embedder.info().dimension {
            return Ok(idx);
        }
        tracing::warn!(path = %path.display(), "index snapshot does not match the catalog; rebuilding");
    }
    index_catalog(catalog, embedder, config.index).map_err(|e| EngineError::Index(e.to_string()))
}

impl Engine {
    /// Reads the configured dataset, or the bundled demo dataset when none is set.
    pub fn open(config: Config) -> Result<Self, EngineError> {
        let parts: DatasetParts = match &config.data_dir {
            Some(dir) => load_dataset(dir).map_err(|e| EngineError::Dataset(e.to_string()))?.into(),
            None => scenario_dataset().into(),
        };
        Self::build(config, parts)
    }

    pub fn build(config: Config, parts: DatasetParts) -> Result<Self, EngineError> {
        let embedder = build_embedder(&config.embedder).map_err(provider_err)?;
        let index = load_or_build_index(&config, &parts.catalog, embedder.as_ref())?;
        let llm = build_llm(&config.providers)?;
        Self::assemble(config, parts, embedder, index, llm)
    }

    /// Full control over the embedder, index and language model; used by
    /// tests and examples that inject doubles.
    pub fn assemble(
        config: Config,
        parts: DatasetParts,
        embedder: Arc<dyn Embedder>,
        index: HnswIndex,
        llm: Arc<dyn LlmProvider>,
    ) -> Result<Self, EngineError> {
        let store = Arc::new(DocStore::new(Arc::new(parts.catalog), parts.field_schema));
        store.load(parts.documents)?;
        let fixtures = match &config.fixtures_dir {
            Some(dir) => FixtureStore::new(dir),
            None => FixtureStore::bundled(),
        };
        let index = Arc::new(IndexHandle::new(index));
        let router = build_router(&config.providers, &fixtures)?;
        let rag = Arc::new(RagEngine::new(embedder.clone(), index.clone(), store.clone(), router));
        let dispatcher = Arc::new(RetrieverSet {
            rag: rag.clone(),
            maps: build_maps(&config.providers, &fixtures)?,
            web: build_web(&config.providers, &fixtures)?,
            search: config.search.clone(),
        });
        let prompts = match &config.templates_dir {
            Some(dir) => PromptSet::load(dir).map_err(provider_err)?,
            None => PromptSet::bundled(),
        };
        let workflow = Workflow::new(llm, dispatcher, parts.regions).with_config(config.agents.clone()).with_prompts(prompts);
        Ok(Self {
            ingestor: Ingestor::new(store.clone()),
            traces: TraceRing::new(config.trace_capacity),
            config,
            embedder,
            store,
            index,
            rag,
            workflow,
            reindex_lock: Mutex::new(()),
            hash_cache: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &Arc<DocStore> {
        &self.store
    }

    pub fn rag(&self) -> &Arc<RagEngine> {
        &self.rag
    }

    pub fn workflow(&self) -> &Workflow {
        &self.workflow
    }

    pub fn traces(&self) -> &TraceRing {
        &self.traces
    }

    /// Runs the agent loop and retains its trace.
    pub fn query(&self, session_id: &str, query: &str, origin: Option<GeoPoint>) -> Result<QueryOutcome, AgentError> {
        let outcome = self.workflow.run_query(session_id, query, origin)?;
        self.traces.push(outcome.trace.clone());
        Ok(outcome)
    }

    pub fn trace(&self, id: &str) -> Option<Trace> {
        self.traces.get(id)
    }

    pub fn ingest_body(&self, body: &str) -> IngestReport {
        self.ingestor.ingest_body(body)
    }

    pub fn ingestor(&self) -> &Ingestor {
        &self.ingestor
    }

    /// Nearest live documents of one service.
    pub fn near(&self, service: &str, origin: GeoPoint, k: usize) -> Result<Vec<ContextDocument>, EngineError> {
        if self.store.collection(service).is_none() {
            return Err(EngineError::UnknownService(service.to_string()));
        }
        let q = GeoQuery::single(service, origin, k)?;
        Ok(self.store.nearest(&q)?.iter().map(|n| ContextDocument::from_document(&n.document, n.distance_m)).collect())
    }

    /// Hash of the index currently being served.
    pub fn snapshot_hash(&self) -> String {
        let idx = self.index.load();
        let key = Arc::as_ptr(&idx) as usize;
        let mut cache = self.hash_cache.lock();
        match cache.as_ref() {
            Some((k, h)) if *k == key => h.clone(),
            _ => {
                let h = idx.snapshot_hash();
                *cache = Some((key, h.clone()));
                h
            }
        }
    }

    /// Rebuilds the index from the catalog and swaps it in; queries already
    /// running keep the index they started with.
    pub fn reindex(&self) -> Result<String, EngineError> {
        let _guard = self.reindex_lock.lock();
        let fresh = index_catalog(self.store.catalog(), self.embedder.as_ref(), self.config.index)
            .map_err(|e| EngineError::Index(e.to_string()))?;
        self.index.publish(fresh);
        Ok(self.snapshot_hash())
    }

    pub fn health(&self) -> Health {
        let idx = self.index.load();
        Health {
            status: "ok".into(),
            catalog_size: self.store.catalog().services().len(),
            collections: self.store.collections().filter(|c| !c.is_empty()).count(),
            documents: self.store.len(),
            index_size: idx.len(),
            snapshot_hash: self.snapshot_hash(),
            embedder: self.embedder.info().name,
            llm: self.workflow.llm().name().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Route;
    use crate::dataset::{scenario_origin, DOG_PARK_QUERY};

    fn engine() -> Engine {
        Engine::open(Config::default()).unwrap()
    }

    #[test]
    fn demo_engine_answers_dog_park_query() {
        let e = engine();
        let out = e.query("s", DOG_PARK_QUERY, Some(scenario_origin())).unwrap();
        assert_eq!(out.route, Route::IotRagSe);
        assert_eq!(out.recommendation.unwrap().service_name, "dog park");
        assert!(e.trace(&out.trace_id).is_some());
    }

    #[test]
    fn reindex_keeps_hash_for_same_catalog() {
        let e = engine();
        let before = e.health().snapshot_hash;
        assert_eq!(e.reindex().unwrap(), before);
    }

    #[test]
    fn ring_evicts_oldest() {
        let ring = TraceRing::new(2);
        let traces: Vec<Trace> = (0..3)
            .map(|i| Trace::new(vec![crate::agents::Update::Started { session_id: i.to_string(), query: "q".into(), origin: None }]))
            .collect();
        for t in &traces {
            ring.push(t.clone());
        }
        assert_eq!(ring.len(), 2);
        assert!(ring.get(&traces[0].id).is_none());
        assert!(ring.get(&traces[2].id).is_some());
    }

    #[test]
    fn snapshot_round_trip_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let e = engine();
        e.index.load().write_snapshot(&path).unwrap();
        let cfg = Config { index_path: Some(path), ..Config::default() };
        assert_eq!(Engine::open(cfg).unwrap().health().snapshot_hash, e.health().snapshot_hash);
    }
}
