//! HNSW graph over unit service-description vectors.
//!
//! Similarity is the dot product (cosine, given unit inputs). Results are
//! ordered by descending similarity, ties by ascending name. Level assignment
//! draws from a seeded ChaCha stream, so the same insertion order always
//! yields the same graph and the same snapshot bytes.

mod snapshot;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use snapshot::{SnapshotError, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

/// Values above 1 keep some longer edges that strict pruning would drop,
/// which helps queries far from every stored vector.
pub const PRUNE_SLACK: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexParams {
    /// Max neighbours per node on layers above 0; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub level_lambda: f64,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        let m = 16;
        Self { m, ef_construction: 200, ef_search: 64, level_lambda: 1.0 / (m as f64).ln(), seed: 0 }
    }
}

impl IndexParams {
    pub fn with_m(m: usize) -> Self {
        Self { m, level_lambda: 1.0 / (m as f64).ln(), ..Self::default() }
    }

    pub fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("invalid params: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub name: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f64,
    id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    // Higher similarity is greater; lower id breaks ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    params: IndexParams,
    dimension: usize,
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
    /// `links[node][layer]`, present for layers `0..=level(node)`.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: Option<u32>,
    name_ids: HashMap<String, u32>,
    rng: ChaCha8Rng,
}

impl PartialEq for HnswIndex {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.dimension == other.dimension
            && self.names == other.names
            && self.vectors == other.vectors
            && self.links == other.links
            && self.entry_point == other.entry_point
    }
}

impl HnswIndex {
    pub fn new(dimension: usize, params: IndexParams) -> Result<Self, IndexError> {
        if params.m < 2 {
            return Err(IndexError::InvalidParams("m must be at least 2"));
        }
        if params.ef_construction == 0 || params.ef_search == 0 {
            return Err(IndexError::InvalidParams("ef must be positive"));
        }
        if !(params.level_lambda.is_finite() && params.level_lambda > 0.0) {
            return Err(IndexError::InvalidParams("level_lambda must be positive"));
        }
        if dimension == 0 {
            return Err(IndexError::InvalidParams("dimension must be positive"));
        }
        Ok(Self {
            params,
            dimension,
            names: Vec::new(),
            vectors: Vec::new(),
            links: Vec::new(),
            entry_point: None,
            name_ids: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    /// Builds from `(name, vector)` pairs in the given order.
    pub fn build<I, S>(dimension: usize, params: IndexParams, entries: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut idx = Self::new(dimension, params)?;
        for (name, v) in entries {
            idx.insert(name, v)?;
        }
        Ok(idx)
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vector(&self, name: &str) -> Option<&[f64]> {
        self.name_ids.get(name).map(|&i| self.vectors[i as usize].as_slice())
    }

    pub fn entry_point(&self) -> Option<&str> {
        self.entry_point.map(|e| self.names[e as usize].as_str())
    }

    pub fn max_level(&self) -> usize {
        self.entry_point.map_or(0, |e| self.level(e))
    }

    fn level(&self, id: u32) -> usize {
        self.links[id as usize].len() - 1
    }

    pub fn degree(&self, name: &str, layer: usize) -> Option<usize> {
        let id = *self.name_ids.get(name)?;
        self.links[id as usize].get(layer).map(Vec::len)
    }

    fn draw_level(&mut self) -> usize {
        // U in (0, 1] keeps ln finite.
        let u: f64 = 1.0 - self.rng.gen::<f64>();
        (-u.ln() * self.params.level_lambda).floor() as usize
    }

    fn check_vector(&self, v: &[f64]) -> Result<(), IndexError> {
        if v.len() != self.dimension {
            return Err(IndexError::DimensionMismatch { expected: self.dimension, got: v.len() });
        }
        let norm = dot(v, v).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(IndexError::NotUnit(norm));
        }
        Ok(())
    }

    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<f64>) -> Result<(), IndexError> {
        let name = name.into();
        self.check_vector(&vector)?;
        if self.name_ids.contains_key(&name) {
            return Err(IndexError::DuplicateName(name));
        }
        let level = self.draw_level();
        let id = self.names.len() as u32;
        self.names.push(name.clone());
        self.vectors.push(vector);
        self.links.push(vec![Vec::new(); level + 1]);
        self.name_ids.insert(name, id);

        let Some(entry) = self.entry_point else {
            self.entry_point = Some(id);
            return Ok(());
        };
        let top = self.level(entry);
        let q = self.vectors[id as usize].clone();
        let mut eps = vec![Scored { sim: dot(&q, &self.vectors[entry as usize]), id: entry }];
        for layer in ((level + 1)..=top).rev() {
            eps = self.search_layer(&q, &eps, 1, layer);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&q, &eps, self.params.ef_construction, layer);
            let chosen = self.select_neighbors(&found, self.params.m);
            self.links[id as usize][layer] = chosen.iter().map(|s| s.id).collect();
            for s in &chosen {
                self.link_back(s.id, id, layer);
            }
            eps = found;
        }
        if level > top {
            self.entry_point = Some(id);
        }
        Ok(())
    }

    fn link_back(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.params.max_degree(layer);
        let list = &mut self.links[from as usize][layer];
        list.push(to);
        if list.len() <= cap {
            return;
        }
        let base = &self.vectors[from as usize];
        let mut cands: Vec<Scored> = self.links[from as usize][layer]
            .iter()
            .map(|&n| Scored { sim: dot(base, &self.vectors[n as usize]), id: n })
            .collect();
        cands.sort_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(&cands, cap);
        self.links[from as usize][layer] = kept.iter().map(|s| s.id).collect();
    }

    /// Diversity heuristic: keep a candidate only if its cosine distance to
    /// the target is below `PRUNE_SLACK` times its distance to every
    /// neighbour already kept; top up with the discarded ones in similarity
    /// order. Input must be sorted best-first.
    fn select_neighbors(&self, sorted: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = &self.vectors[c.id as usize];
            let gap = 1.0 - c.sim;
            if kept.iter().all(|k| PRUNE_SLACK * (1.0 - dot(cv, &self.vectors[k.id as usize])) > gap) {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    /// Beam search on one layer; returns up to `ef` nodes, best first.
    fn search_layer(&self, q: &[f64], entry: &[Scored], ef: usize, layer: usize) -> Vec<Scored> {
        let mut visited = vec![false; self.names.len()];
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut best: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
        for &e in entry {
            if !std::mem::replace(&mut visited[e.id as usize], true) {
                candidates.push(e);
                best.push(std::cmp::Reverse(e));
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(c) = candidates.pop() {
            let worst = best.peek().map(|r| r.0);
            if best.len() >= ef && worst.is_some_and(|w| c < w) {
                break;
            }
            for &n in &self.links[c.id as usize][layer] {
                if std::mem::replace(&mut visited[n as usize], true) {
                    continue;
                }
                let s = Scored { sim: dot(q, &self.vectors[n as usize]), id: n };
                if best.len() < ef || best.peek().is_some_and(|w| s > w.0) {
                    candidates.push(s);
                    best.push(std::cmp::Reverse(s));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    fn hits(&self, mut scored: Vec<Scored>, k: usize) -> Vec<SearchHit> {
        scored.sort_by(|a, b| {
            b.sim.total_cmp(&a.sim).then_with(|| self.names[a.id as usize].cmp(&self.names[b.id as usize]))
        });
        scored.truncate(k);
        scored
            .into_iter()
            .map(|s| SearchHit { name: self.names[s.id as usize].clone(), similarity: s.sim })
            .collect()
    }

    /// Approximate top-k with the configured `ef_search` (raised to `k` if smaller).
    pub fn search(&self, query: &[f64], k: usize) -> Vec<SearchHit> {
        self.search_with_ef(query, k, self.params.ef_search)
    }

    pub fn search_with_ef(&self, query: &[f64], k: usize, ef: usize) -> Vec<SearchHit> {
        let Some(entry) = self.entry_point else {
            return Vec::new();
        };
        if k == 0 || query.len() != self.dimension {
            return Vec::new();
        }
        let mut eps = vec![Scored { sim: dot(query, &self.vectors[entry as usize]), id: entry }];
        for layer in (1..=self.level(entry)).rev() {
            eps = self.search_layer(query, &eps, 1, layer);
        }
        let found = self.search_layer(query, &eps, ef.max(k), 0);
        self.hits(found, k)
    }

    /// Exact top-k by full scan.
    pub fn brute_force_search(&self, query: &[f64], k: usize) -> Vec<SearchHit> {
        let all = (0..self.names.len() as u32)
            .map(|id| Scored { sim: dot(query, &self.vectors[id as usize]), id })
            .collect();
        self.hits(all, k)
    }

    /// Structural invariants: unit vectors, layer membership, degree caps,
    /// no self or duplicate edges, and reachability from the entry point on
    /// every layer.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, v) in self.vectors.iter().enumerate() {
            let n = dot(v, v).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(format!("{} has norm {n}", self.names[i]));
            }
        }
        for (i, layers) in self.links.iter().enumerate() {
            for (layer, nbrs) in layers.iter().enumerate() {
                if nbrs.len() > self.params.max_degree(layer) {
                    return Err(format!("{} has degree {} on layer {layer}", self.names[i], nbrs.len()));
                }
                let mut seen = std::collections::HashSet::new();
                for &n in nbrs {
                    if n as usize == i || !seen.insert(n) {
                        return Err(format!("{} has a self or duplicate edge", self.names[i]));
                    }
                    if self.level(n) < layer {
                        return Err(format!("edge to {} above its level", self.names[n as usize]));
                    }
                }
            }
        }
        let Some(entry) = self.entry_point else {
            return if self.is_empty() { Ok(()) } else { Err("no entry point".into()) };
        };
        if (0..self.len() as u32).any(|i| self.level(i) > self.level(entry)) {
            return Err("entry point is not on the top layer".into());
        }
        for layer in 0..=self.level(entry) {
            let members = (0..self.len() as u32).filter(|&i| self.level(i) >= layer).count();
            let mut seen = vec![false; self.len()];
            let mut queue = VecDeque::from([entry]);
            seen[entry as usize] = true;
            let mut reached = 0;
            while let Some(n) = queue.pop_front() {
                reached += 1;
                for &m in &self.links[n as usize][layer] {
                    if !std::mem::replace(&mut seen[m as usize], true) {
                        queue.push_back(m);
                    }
                }
            }
            if reached != members {
                return Err(format!("layer {layer}: reached {reached} of {members}"));
            }
        }
        Ok(())
    }
}

/// Recall of `approx` against `exact`, as the fraction of exact names found.
pub fn recall(approx: &[SearchHit], exact: &[SearchHit]) -> f64 {
    if exact.is_empty() {
        return 1.0;
    }
    let found = exact.iter().filter(|e| approx.iter().any(|a| a.name == e.name)).count();
    found as f64 / exact.len() as f64
}

/// Atomically swappable published index. Readers keep the `Arc` they loaded.
#[derive(Debug)]
pub struct IndexHandle {
    current: RwLock<Arc<HnswIndex>>,
}

impl IndexHandle {
    pub fn new(index: HnswIndex) -> Self {
        Self { current: RwLock::new(Arc::new(index)) }
    }

    pub fn load(&self) -> Arc<HnswIndex> {
        self.current.read().clone()
    }

    pub fn publish(&self, index: HnswIndex) -> Arc<HnswIndex> {
        std::mem::replace(&mut *self.current.write(), Arc::new(index))
    }
}
