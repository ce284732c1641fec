//! The agent loop: a classifier picks a route, a retriever for that route
//! gathers context, a generator drafts an answer and a reviewer accepts it,
//! asks for a reformulated query, or sends the question to another source.
//!
//! Every change to [`AgentState`] goes through [`Update`], so the recorded
//! trace replays to the final state. The loop runs at most `1 + hop_budget`
//! cycles: each cycle after the first is paid for by one hop, and a hop is
//! only taken while `hops < hop_budget`.

mod llm;
pub mod mock;
mod preferences;
mod prompts;
mod session;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use llm::{extract_json_object, parse_chat_response, AgentRole, HttpLlm, LlmProvider, LlmRequest, DEFAULT_LLM_BASE_URL, DEFAULT_LLM_MODEL};
pub use mock::MockLlm;
pub use preferences::{
    compare_documents, extract_preferences, find_place, proximity_signal, rank_documents, resolve_location,
    LocationSource, Place, Preference, ProximitySignal, ResolvedLocation, GAZETTEER,
};
pub use prompts::{PromptError, PromptSet, PromptTemplate};
pub use session::{render_history, SessionStore, Turn, DEFAULT_HISTORY_TURNS};

use crate::datamodel::{GeoPoint, Region};
use crate::error::ProviderError;
use crate::providers::{MapsProvider, WebProvider};
use crate::rag::{ContextDocument, ContextSource, RagEngine, RetrievedContext, SearchConfig};

pub const MAX_QUERY_CHARS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    DirectAnswer,
    IotRagSe,
    Maps,
    Web,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::DirectAnswer, Route::IotRagSe, Route::Maps, Route::Web];
    /// Reroute order.
    pub const RETRIEVAL: [Route; 3] = [Route::IotRagSe, Route::Maps, Route::Web];

    pub fn as_str(&self) -> &'static str {
        match self {
            Route::DirectAnswer => "direct_answer",
            Route::IotRagSe => "iot_rag_se",
            Route::Maps => "maps",
            Route::Web => "web",
        }
    }

    pub fn parse(s: &str) -> Option<Route> {
        Route::ALL.into_iter().find(|r| r.as_str() == s.trim())
    }

    pub fn source(&self) -> Option<ContextSource> {
        match self {
            Route::DirectAnswer => None,
            Route::IotRagSe => Some(ContextSource::IotRagSe),
            Route::Maps => Some(ContextSource::Maps),
            Route::Web => Some(ContextSource::Web),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Reformulate,
    Reroute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Accepted because the budget or the routes ran out, not on merit.
    LowConfidence,
    /// Travel times could not be computed; distances only.
    Unrouted,
    /// A fixture provider had no recording for the request.
    FixtureMiss,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<ContextDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<ContextDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<String>,
}

impl Draft {
    pub fn text(answer: impl Into<String>) -> Self {
        Self { answer: answer.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub session_id: String,
    pub query: String,
    pub working_query: String,
    pub origin: Option<GeoPoint>,
    pub location: Option<ResolvedLocation>,
    pub route: Option<Route>,
    pub context: Option<RetrievedContext>,
    pub draft: Option<Draft>,
    pub verdict: Option<Verdict>,
    /// Insertion-ordered, no duplicates.
    pub tried_routes: Vec<Route>,
    /// Routes on which the one allowed reformulation was spent.
    pub reformulated_routes: Vec<Route>,
    pub hops: u32,
    pub cycles: u32,
    pub flags: BTreeSet<Flag>,
}

fn push_unique(v: &mut Vec<Route>, r: Route) {
    if !v.contains(&r) {
        v.push(r);
    }
}

impl AgentState {
    pub fn apply(&mut self, update: &Update) {
        match update {
            Update::Started { session_id, query, origin } => {
                *self = AgentState {
                    session_id: session_id.clone(),
                    query: query.clone(),
                    working_query: query.clone(),
                    origin: *origin,
                    ..AgentState::default()
                };
            }
            Update::Located { location } => self.location = Some(location.clone()),
            Update::Classified { route } => {
                self.route = Some(*route);
                self.draft = None;
                self.verdict = None;
                if *route == Route::DirectAnswer {
                    push_unique(&mut self.tried_routes, *route);
                    self.cycles += 1;
                }
            }
            Update::Dispatched { route, context } => {
                push_unique(&mut self.tried_routes, *route);
                self.context = Some(context.clone());
                self.cycles += 1;
            }
            Update::DispatchFailed { route, .. } => {
                push_unique(&mut self.tried_routes, *route);
                self.context = None;
                self.cycles += 1;
            }
            Update::Drafted { draft } => self.draft = Some(draft.clone()),
            Update::Reviewed { verdict, .. } => self.verdict = Some(*verdict),
            Update::Reformulated { working_query } => {
                self.working_query = working_query.clone();
                if let Some(r) = self.route {
                    push_unique(&mut self.reformulated_routes, r);
                }
                self.hops += 1;
                self.context = None;
                self.draft = None;
                self.verdict = None;
            }
            Update::Rerouted { to } => {
                self.route = Some(*to);
                self.hops += 1;
                self.context = None;
                self.draft = None;
                self.verdict = None;
            }
            Update::Flagged { flag } => {
                self.flags.insert(*flag);
            }
            Update::ForcedAcceptance { .. } => {
                self.verdict = Some(Verdict::Accepted);
                self.flags.insert(Flag::LowConfidence);
            }
        }
    }

    /// Structural invariants that hold after every update.
    pub fn check(&self, hop_budget: u32) -> Result<(), String> {
        if self.hops > hop_budget {
            return Err(format!("hops {} exceed budget {hop_budget}", self.hops));
        }
        if self.cycles > hop_budget + 1 {
            return Err(format!("cycles {} exceed {}", self.cycles, hop_budget + 1));
        }
        let distinct: BTreeSet<_> = self.tried_routes.iter().collect();
        if distinct.len() != self.tried_routes.len() {
            return Err(format!("repeated route in {:?}", self.tried_routes));
        }
        if self.verdict == Some(Verdict::Accepted) && self.draft.is_none() {
            return Err("accepted without a draft".into());
        }
        Ok(())
    }
}

/// One recorded state transition. Carries no timings, so equal runs give
/// equal traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Update {
    Started { session_id: String, query: String, origin: Option<GeoPoint> },
    Located { location: ResolvedLocation },
    Classified { route: Route },
    Dispatched { route: Route, context: RetrievedContext },
    DispatchFailed { route: Route, error: String },
    Drafted { draft: Draft },
    Reviewed { verdict: Verdict, reason: String },
    Reformulated { working_query: String },
    Rerouted { to: Route },
    Flagged { flag: Flag },
    ForcedAcceptance { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub updates: Vec<Update>,
}

impl Trace {
    pub fn new(updates: Vec<Update>) -> Self {
        let bytes = serde_json::to_vec(&updates).expect("trace serializes");
        let id = hex::encode(Sha256::digest(&bytes))[..16].to_string();
        Self { id, updates }
    }

    pub fn replay(&self) -> AgentState {
        replay(&self.updates)
    }

    /// Route sequence as `classify→iot_rag_se→generate→review(accepted)`.
    pub fn summary(&self) -> String {
        let steps: Vec<String> = self
            .updates
            .iter()
            .filter_map(|u| match u {
                Update::Classified { route } => Some(format!("classify→{}", route.as_str())),
                Update::Dispatched { route, .. } => Some(format!("dispatch({})", route.as_str())),
                Update::DispatchFailed { route, .. } => Some(format!("dispatch_failed({})", route.as_str())),
                Update::Drafted { .. } => Some("generate".into()),
                Update::Reviewed { verdict, .. } => Some(format!("review({})", verdict_str(*verdict))),
                Update::Reformulated { .. } => Some("reformulate".into()),
                Update::Rerouted { to } => Some(format!("reroute→{}", to.as_str())),
                Update::ForcedAcceptance { .. } => Some("forced_acceptance".into()),
                _ => None,
            })
            .collect();
        steps.join("→")
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Accepted => "accepted",
        Verdict::Reformulate => "reformulate",
        Verdict::Reroute => "reroute",
    }
}

pub fn replay(updates: &[Update]) -> AgentState {
    let mut state = AgentState::default();
    for u in updates {
        state.apply(u);
    }
    state
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchError {
    pub reason: String,
    pub fixture_miss: bool,
}

impl DispatchError {
    pub fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into(), fixture_miss: false }
    }
}

/// The retriever sub-nodes, one per retrieval route.
pub trait Dispatcher: Send + Sync {
    fn retrieve(&self, route: Route, query: &str, location: &ResolvedLocation) -> Result<RetrievedContext, DispatchError>;
}

/// Production dispatcher: the IoT search engine, maps text search and web
/// search. An empty result counts as a failure so the loop can move on.
pub struct RetrieverSet {
    pub rag: Arc<RagEngine>,
    pub maps: Arc<dyn MapsProvider>,
    pub web: Arc<dyn WebProvider>,
    pub search: SearchConfig,
}

impl Dispatcher for RetrieverSet {
    fn retrieve(&self, route: Route, query: &str, location: &ResolvedLocation) -> Result<RetrievedContext, DispatchError> {
        let origin = location.point;
        match route {
            Route::DirectAnswer => Err(DispatchError::new("direct_answer has no retriever")),
            Route::IotRagSe => {
                let ctx = self.rag.retrieve(query, origin, &self.search).map_err(|e| DispatchError::new(e.to_string()))?;
                if ctx.documents.is_empty() {
                    return Err(DispatchError::new("no live documents in range"));
                }
                Ok(ctx)
            }
            Route::Maps => {
                let r = self.maps.text_search(query, Some(origin)).map_err(|e| DispatchError::new(e.to_string()))?;
                if r.places.is_empty() {
                    let reason = if r.fixture_miss { "no recorded maps results" } else { "no places found" };
                    return Err(DispatchError { reason: reason.into(), fixture_miss: r.fixture_miss });
                }
                let matched = self.rag.semantic_route(query, 1).unwrap_or_default();
                let service = matched.first().map(|h| h.name.clone()).unwrap_or_else(|| "place".into());
                Ok(RetrievedContext {
                    source: ContextSource::Maps,
                    query: query.to_string(),
                    origin,
                    matched_services: matched,
                    documents: r.places.iter().map(|p| ContextDocument::from_place(p, &service, origin)).collect(),
                    snippets: Vec::new(),
                    unrouted: false,
                    fixture_miss: false,
                })
            }
            Route::Web => {
                let r = self.web.search(query).map_err(|e| DispatchError::new(e.to_string()))?;
                if r.snippets.is_empty() {
                    let reason = if r.fixture_miss { "no recorded web results" } else { "no web results" };
                    return Err(DispatchError { reason: reason.into(), fixture_miss: r.fixture_miss });
                }
                Ok(RetrievedContext {
                    source: ContextSource::Web,
                    query: query.to_string(),
                    origin,
                    matched_services: Vec::new(),
                    documents: Vec::new(),
                    snippets: r.snippets,
                    unrouted: false,
                    fixture_miss: false,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub hop_budget: u32,
    pub seed: u64,
    pub history_turns: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { hop_budget: 3, seed: 0, history_turns: DEFAULT_HISTORY_TURNS }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("{role:?} provider failed: {error}")]
    Provider { role: AgentRole, error: ProviderError },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Final answer of one run plus its full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub session_id: String,
    pub answer: String,
    pub recommendation: Option<ContextDocument>,
    pub alternatives: Vec<ContextDocument>,
    pub reasons: Vec<String>,
    pub route: Route,
    pub trace_id: String,
    pub flags: BTreeSet<Flag>,
    pub trace: Trace,
}

const APOLOGY: &str = "Sorry, I could not find a reliable answer to that.";

/// Toronto city centre, used when a query names no place and carries no origin.
pub fn default_origin() -> GeoPoint {
    GeoPoint::new(43.6532, -79.3832).expect("valid point")
}

pub struct Workflow {
    llm: Arc<dyn LlmProvider>,
    dispatcher: Arc<dyn Dispatcher>,
    prompts: PromptSet,
    regions: Vec<Region>,
    default_origin: GeoPoint,
    config: AgentConfig,
    sessions: SessionStore,
}

struct Recorder {
    state: AgentState,
    updates: Vec<Update>,
}

impl Recorder {
    fn push(&mut self, u: Update) {
        self.state.apply(&u);
        self.updates.push(u);
    }

    fn flag(&mut self, flag: Flag) {
        if !self.state.flags.contains(&flag) {
            self.push(Update::Flagged { flag });
        }
    }
}

impl Workflow {
    pub fn new(llm: Arc<dyn LlmProvider>, dispatcher: Arc<dyn Dispatcher>, regions: Vec<Region>) -> Self {
        let config = AgentConfig::default();
        Self {
            llm,
            dispatcher,
            prompts: PromptSet::bundled(),
            regions,
            default_origin: default_origin(),
            sessions: SessionStore::new(config.history_turns),
            config,
        }
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.sessions = SessionStore::new(config.history_turns);
        self.config = config;
        self
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_default_origin(mut self, origin: GeoPoint) -> Self {
        self.default_origin = origin;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn llm(&self) -> &Arc<dyn LlmProvider> {
        &self.llm
    }

    pub fn run_query(&self, session_id: &str, query: &str, origin: Option<GeoPoint>) -> Result<QueryOutcome, AgentError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(AgentError::InvalidQuery("query is empty".into()));
        }
        if query.chars().count() > MAX_QUERY_CHARS {
            return Err(AgentError::InvalidQuery(format!("query exceeds {MAX_QUERY_CHARS} characters")));
        }
        let history = self.sessions.history(session_id);
        let mut rec = Recorder { state: AgentState::default(), updates: Vec::new() };
        rec.push(Update::Started { session_id: session_id.to_string(), query: query.to_string(), origin });
        let location = resolve_location(query, origin, self.default_origin, &self.regions);
        rec.push(Update::Located { location: location.clone() });
        self.classify(&mut rec, &history)?;

        loop {
            let route = rec.state.route.expect("classified");
            if rec.state.draft.is_none() {
                match self.dispatcher.retrieve(route, &rec.state.working_query, &location) {
                    Ok(context) => {
                        let (unrouted, miss) = (context.unrouted, context.fixture_miss);
                        rec.push(Update::Dispatched { route, context });
                        if unrouted {
                            rec.flag(Flag::Unrouted);
                        }
                        if miss {
                            rec.flag(Flag::FixtureMiss);
                        }
                        let draft = self.generate(&rec.state)?;
                        rec.push(Update::Drafted { draft });
                    }
                    Err(e) => {
                        rec.push(Update::DispatchFailed { route, error: e.reason });
                        if e.fixture_miss {
                            rec.flag(Flag::FixtureMiss);
                        }
                        if self.reroute(&mut rec) {
                            continue;
                        }
                        break;
                    }
                }
            }
            let review = match self.review(&rec.state) {
                Ok(r) => r,
                Err(e) => {
                    self.force(&mut rec, format!("reviewer unavailable: {e}"));
                    break;
                }
            };
            rec.push(Update::Reviewed { verdict: review.verdict, reason: review.reason });
            match review.verdict {
                Verdict::Accepted => break,
                Verdict::Reformulate if !rec.state.reformulated_routes.contains(&route) => {
                    if rec.state.hops >= self.config.hop_budget {
                        self.force(&mut rec, "hop budget exhausted".into());
                        break;
                    }
                    let rewritten = review
                        .query
                        .filter(|q| !q.trim().is_empty() && q.trim() != rec.state.working_query)
                        .unwrap_or_else(|| format!("{} (be specific)", rec.state.working_query));
                    rec.push(Update::Reformulated { working_query: rewritten });
                    if route == Route::DirectAnswer {
                        self.classify(&mut rec, &history)?;
                    }
                }
                Verdict::Reformulate | Verdict::Reroute => {
                    if !self.reroute(&mut rec) {
                        break;
                    }
                }
            }
        }

        let Recorder { state, updates } = rec;
        debug_assert!(state.check(self.config.hop_budget).is_ok(), "{:?}", state.check(self.config.hop_budget));
        let draft = state.draft.clone().unwrap_or_else(|| Draft::text(APOLOGY));
        let trace = Trace::new(updates);
        self.sessions.record(session_id, Turn { query: query.to_string(), answer: draft.answer.clone() });
        Ok(QueryOutcome {
            session_id: session_id.to_string(),
            answer: draft.answer,
            recommendation: draft.recommendation,
            alternatives: draft.alternatives,
            reasons: draft.reasons,
            route: state.route.expect("classified"),
            trace_id: trace.id.clone(),
            flags: state.flags,
            trace,
        })
    }

    /// Moves to the next untried retrieval route, or forces acceptance when
    /// the budget or the routes are used up.
    fn reroute(&self, rec: &mut Recorder) -> bool {
        if rec.state.hops >= self.config.hop_budget {
            self.force(rec, "hop budget exhausted".into());
            return false;
        }
        match Route::RETRIEVAL.into_iter().find(|r| !rec.state.tried_routes.contains(r)) {
            Some(to) => {
                rec.push(Update::Rerouted { to });
                true
            }
            None => {
                self.force(rec, "all routes tried".into());
                false
            }
        }
    }

    fn force(&self, rec: &mut Recorder, reason: String) {
        if rec.state.draft.is_none() {
            rec.push(Update::Drafted { draft: Draft::text(APOLOGY) });
        }
        rec.push(Update::ForcedAcceptance { reason });
    }

    fn call(&self, role: AgentRole, prompt: String, payload: Value) -> Result<String, AgentError> {
        let req = LlmRequest { role, prompt, payload, seed: self.config.seed };
        self.llm.complete(&req).map_err(|error| AgentError::Provider { role, error })
    }

    fn classify(&self, rec: &mut Recorder, history: &[Turn]) -> Result<(), AgentError> {
        let s = &rec.state;
        let location = s.location.as_ref().expect("located");
        let location_text = match &location.place {
            Some(p) => format!("{p} ({:.4}, {:.4})", location.point.lat(), location.point.lon()),
            None => format!("({:.4}, {:.4})", location.point.lat(), location.point.lon()),
        };
        let coverage = location.region_id.clone().unwrap_or_else(|| "none".into());
        let prompt = self.prompts.classify.render(&BTreeMap::from([
            ("query", s.working_query.clone()),
            ("history", render_history(history)),
            ("location", location_text),
            ("coverage", coverage),
        ]))?;
        let payload = json!({
            "query": s.working_query,
            "place": location.place,
            "covered": location.covered(),
            "history": history,
        });
        let reply = self.call(AgentRole::Classifier, prompt, payload)?;
        let (route, answer) = parse_classification(&reply)
            .ok_or_else(|| AgentError::Provider { role: AgentRole::Classifier, error: ProviderError::Malformed(reply.clone()) })?;
        rec.push(Update::Classified { route });
        if route == Route::DirectAnswer {
            rec.push(Update::Drafted { draft: Draft::text(answer.unwrap_or(reply)) });
        }
        Ok(())
    }

    fn generate(&self, s: &AgentState) -> Result<Draft, AgentError> {
        let route = s.route.expect("classified");
        let ctx = s.context.as_ref().expect("dispatched");
        let prefs = extract_preferences(&s.query, &ctx.documents);
        let context_json = if route == Route::Web {
            serde_json::to_string_pretty(&ctx.snippets)
        } else {
            serde_json::to_string_pretty(&ctx.documents)
        }
        .expect("context serializes");
        let pref_text = if prefs.is_empty() {
            "none".to_string()
        } else {
            prefs.iter().map(|p| p.field()).collect::<Vec<_>>().join(", ")
        };
        let template = self.prompts.generate(route).expect("retrieval route has a generator prompt");
        let prompt = template.render(&BTreeMap::from([
            ("query", s.working_query.clone()),
            ("context", context_json),
            ("preferences", pref_text),
        ]))?;
        let payload = json!({
            "route": route,
            "query": s.query,
            "working_query": s.working_query,
            "place": s.location.as_ref().and_then(|l| l.place.clone()),
            "preferences": prefs,
            "documents": ctx.documents,
            "snippets": ctx.snippets,
        });
        let reply = self.call(AgentRole::Generator, prompt, payload)?;
        Ok(parse_draft(&reply, &ctx.documents))
    }

    fn review(&self, s: &AgentState) -> Result<Review, AgentError> {
        let route = s.route.expect("classified");
        let draft = s.draft.as_ref().expect("drafted");
        let docs = s.context.as_ref().map(|c| c.documents.as_slice()).unwrap_or_default();
        let prefs = extract_preferences(&s.query, docs);
        let names: Vec<&str> = docs.iter().map(|d| d.display_name.as_str()).collect();
        let tokens: Vec<&str> = prefs.iter().map(|p| p.token()).collect();
        let prompt = self.prompts.review.render(&BTreeMap::from([
            ("query", s.query.clone()),
            ("route", route.as_str().to_string()),
            ("answer", draft.answer.clone()),
            ("context_names", if names.is_empty() { "(none)".into() } else { names.join(", ") }),
            ("preferences", if tokens.is_empty() { "none".into() } else { tokens.join(", ") }),
        ]))?;
        let payload = json!({
            "route": route,
            "query": s.query,
            "working_query": s.working_query,
            "answer": draft.answer,
            "context_names": names,
            "preference_tokens": tokens,
            "reformulated_on_route": s.reformulated_routes.contains(&route),
        });
        let reply = self.call(AgentRole::Reviewer, prompt, payload)?;
        parse_review(&reply)
            .ok_or_else(|| AgentError::Provider { role: AgentRole::Reviewer, error: ProviderError::Malformed(reply) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub verdict: Verdict,
    pub query: Option<String>,
    pub reason: String,
}

/// Earliest route name in free text when the reply is not JSON.
fn scan_route(text: &str) -> Option<Route> {
    let lower = text.to_lowercase();
    Route::ALL.into_iter().filter_map(|r| lower.find(r.as_str()).map(|i| (i, r))).min().map(|(_, r)| r)
}

pub fn parse_classification(reply: &str) -> Option<(Route, Option<String>)> {
    if let Some(v) = extract_json_object(reply) {
        if let Some(route) = v.get("route").and_then(Value::as_str).and_then(Route::parse) {
            let answer = v.get("answer").and_then(Value::as_str).map(str::trim).filter(|a| !a.is_empty());
            return Some((route, answer.map(str::to_string)));
        }
    }
    scan_route(reply).map(|r| (r, None))
}

pub fn parse_review(reply: &str) -> Option<Review> {
    let parse_verdict = |s: &str| match s.trim().to_lowercase().as_str() {
        "accepted" | "accept" => Some(Verdict::Accepted),
        "reformulate" => Some(Verdict::Reformulate),
        "reroute" => Some(Verdict::Reroute),
        _ => None,
    };
    if let Some(v) = extract_json_object(reply) {
        if let Some(verdict) = v.get("verdict").and_then(Value::as_str).and_then(parse_verdict) {
            return Some(Review {
                verdict,
                query: v.get("query").and_then(Value::as_str).map(str::to_string),
                reason: v.get("reason").and_then(Value::as_str).unwrap_or("").to_string(),
            });
        }
    }
    let lower = reply.to_lowercase();
    [("reformulate", Verdict::Reformulate), ("reroute", Verdict::Reroute), ("accept", Verdict::Accepted)]
        .into_iter()
        .filter_map(|(w, v)| lower.find(w).map(|i| (i, v)))
        .min_by_key(|(i, _)| *i)
        .map(|(_, verdict)| Review { verdict, query: None, reason: reply.trim().to_string() })
}

fn find_doc<'a>(docs: &'a [ContextDocument], name: &str) -> Option<&'a ContextDocument> {
    let name = name.trim().to_lowercase();
    docs.iter().find(|d| d.display_name.to_lowercase() == name)
}

/// Reads a generator reply. JSON replies map names back to context
/// documents; plain text recommends the earliest-mentioned document.
pub fn parse_draft(reply: &str, docs: &[ContextDocument]) -> Draft {
    let json = extract_json_object(reply).filter(|v| v.get("answer").and_then(Value::as_str).is_some());
    let answer = json
        .as_ref()
        .and_then(|v| v.get("answer").and_then(Value::as_str))
        .unwrap_or(reply)
        .trim()
        .to_string();
    let lower = answer.to_lowercase();
    let mentioned = || {
        docs.iter()
            .filter_map(|d| lower.find(&d.display_name.to_lowercase()).map(|i| (i, d)))
            .min_by_key(|(i, _)| *i)
            .map(|(_, d)| d)
    };
    let recommendation = json
        .as_ref()
        .and_then(|v| v.get("recommendation").and_then(Value::as_str))
        .and_then(|n| find_doc(docs, n))
        .or_else(mentioned)
        .cloned();
    let strings = |key: &str| -> Vec<String> {
        json.as_ref()
            .and_then(|v| v.get(key).and_then(Value::as_array))
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default()
    };
    let named: Vec<ContextDocument> = strings("alternatives").iter().filter_map(|n| find_doc(docs, n)).cloned().collect();
    let alternatives = if named.is_empty() && recommendation.is_some() {
        docs.iter().filter(|d| Some(*d) != recommendation.as_ref()).cloned().collect()
    } else {
        named
    };
    Draft { answer, recommendation, alternatives, reasons: strings("reasons") }
}
