//! Offline providers. [`MockLlm`] answers every agent role with fixed
//! rules over the structured payload. [`ScriptedLlm`] and
//! [`ScriptedDispatcher`] replay chosen behaviours for exploring the loop.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::{json, Value};

use super::{
    rank_documents, AgentRole, DispatchError, Dispatcher, LlmProvider, LlmRequest, Preference, ResolvedLocation, Route,
    Verdict,
};
use crate::datamodel::{format_travel_time, service_type_label};
use crate::error::ProviderError;
use crate::providers::{truncate_utf8, WebSnippet};
use crate::rag::{ContextDocument, RetrievedContext};

const GREETINGS: &[&str] = &[
    "hi", "hello", "hey", "thanks", "thank you", "good morning", "good evening", "who are you", "what can you do",
];

const WEB_TOPICS: &[&str] = &[
    "weather", "forecast", "temperature", "rain", "snow", "news", "headlines", "score", "stock", "exchange rate",
    "population", "history of", "who is", "who was", "who's", "who are", "who founded", "who invented", "who owns",
    "when did", "when was", "capital of",
];

fn normalized(q: &str) -> String {
    format!(" {} ", q.to_lowercase().replace(|c: char| !c.is_alphanumeric() && c != '\'', " ").split_whitespace().collect::<Vec<_>>().join(" "))
}

fn has_phrase(q: &str, phrases: &[&str]) -> bool {
    let q = normalized(q);
    phrases.iter().any(|p| q.contains(&format!(" {p} ")))
}

pub fn is_identity_question(query: &str) -> bool {
    has_phrase(query, &["who is", "who was", "who's", "who are", "who founded", "who invented", "who owns"])
        && !is_greeting(query)
}

fn is_greeting(query: &str) -> bool {
    let q = normalized(query);
    let words = q.split_whitespace().count();
    words <= 5 && GREETINGS.iter().any(|g| q.contains(&format!(" {g} ")))
}

/// Two adjacent capitalised words, neither a common sentence opener.
pub fn has_person_name(text: &str) -> bool {
    const OPENERS: &[&str] = &["The", "A", "An", "According", "In", "On", "It", "This", "That", "I", "Our"];
    let capitalised = |w: &str| {
        let mut cs = w.chars();
        matches!(cs.next(), Some(c) if c.is_uppercase())
            && w.chars().count() >= 2
            && cs.all(|c| c.is_lowercase() || c == '-' || c == '\'')
            && !OPENERS.contains(&w)
    };
    let words: Vec<&str> = text.split(|c: char| c.is_whitespace() || ",.;:!?()\"".contains(c)).filter(|w| !w.is_empty()).collect();
    words.windows(2).any(|w| capitalised(w[0]) && capitalised(w[1]))
}

fn scalar_after<'a>(content: &'a str, key: &str) -> Option<&'a str> {
    let rest = &content[content.find(key)? + key.len()..];
    let rest = rest.trim_start_matches([' ', ':', '\'', '"']);
    let end = rest.find([',', '}', '\'', '"']).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Current conditions from a weather-service snippet, when it is one.
pub fn weather_summary(content: &str) -> Option<String> {
    let temp = scalar_after(content, "'temp_c'").or_else(|| scalar_after(content, "\"temp_c\""))?;
    let condition = scalar_after(content, "'text'").or_else(|| scalar_after(content, "\"text\""));
    let mut s = format!("{temp}°C");
    if let Some(c) = condition {
        s.push_str(&format!(" and {}", c.to_lowercase()));
    }
    if let Some(h) = scalar_after(content, "'humidity'").or_else(|| scalar_after(content, "\"humidity\"")) {
        s.push_str(&format!(", humidity {h}%"));
    }
    if let Some(w) = scalar_after(content, "'wind_kph'").or_else(|| scalar_after(content, "\"wind_kph\"")) {
        s.push_str(&format!(", wind {w} km/h"));
    }
    Some(s)
}

/// Rule-based stand-in for a hosted model; the same request always gets the
/// same reply.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockLlm;

impl MockLlm {
    fn classify(&self, p: &Value) -> Value {
        let query = p["query"].as_str().unwrap_or("");
        if is_greeting(query) {
            let answer = if normalized(query).contains(" thank") {
                "You're welcome! Ask me whenever you need another place nearby."
            } else {
                "Hello! Ask me for a nearby service and I will pick one using live data."
            };
            return json!({ "route": "direct_answer", "answer": answer });
        }
        let route = if has_phrase(query, WEB_TOPICS) {
            Route::Web
        } else if p["covered"].as_bool().unwrap_or(false) {
            Route::IotRagSe
        } else {
            Route::Maps
        };
        json!({ "route": route })
    }

    fn generate(&self, p: &Value) -> Value {
        let route = p.get("route").and_then(|r| serde_json::from_value::<Route>(r.clone()).ok());
        if route == Some(Route::Web) {
            let snippets: Vec<WebSnippet> = serde_json::from_value(p["snippets"].clone()).unwrap_or_default();
            return generate_web(&snippets, p["place"].as_str());
        }
        let docs: Vec<ContextDocument> = serde_json::from_value(p["documents"].clone()).unwrap_or_default();
        let prefs: Vec<Preference> = serde_json::from_value(p["preferences"].clone()).unwrap_or_default();
        generate_recommendation(&docs, &prefs)
    }

    fn review(&self, p: &Value) -> Value {
        let answer = p["answer"].as_str().unwrap_or("");
        let lower = answer.to_lowercase();
        let route = p.get("route").and_then(|r| serde_json::from_value::<Route>(r.clone()).ok());
        let query = p["query"].as_str().unwrap_or("");
        let names: Vec<&str> = p["context_names"].as_array().map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
        let tokens: Vec<&str> =
            p["preference_tokens"].as_array().map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();

        let mut missing: Vec<String> = Vec::new();
        if answer.trim().is_empty() {
            missing.push("an answer".into());
        }
        if !names.is_empty() && !names.iter().any(|n| lower.contains(&n.to_lowercase())) {
            missing.push("a place from the results".into());
        }
        missing.extend(tokens.iter().filter(|t| !lower.contains(&t.to_lowercase())).map(|t| format!("`{t}`")));
        if route == Some(Route::Web) && is_identity_question(query) && !has_person_name(answer) {
            missing.push("a person's name".into());
        }
        if missing.is_empty() {
            return json!({ "verdict": "accepted", "reason": "answer covers the question" });
        }
        let reason = format!("missing {}", missing.join(", "));
        if p["reformulated_on_route"].as_bool().unwrap_or(false) {
            return json!({ "verdict": "reroute", "reason": reason });
        }
        let working = p["working_query"].as_str().unwrap_or(query);
        let extra = if is_identity_question(query) { "full name".to_string() } else { tokens.join(" ") };
        let rewritten = if extra.is_empty() { format!("{working} nearby") } else { format!("{working} {extra}") };
        json!({ "verdict": "reformulate", "query": rewritten, "reason": reason })
    }
}

fn preference_reason(p: Preference, d: &ContextDocument) -> String {
    let field = d.extra.get(p.field());
    match p {
        Preference::ParkingAvailable => match field.and_then(|v| v.as_bool()) {
            Some(true) => "parking is available right now".into(),
            _ => "none of the nearby options reports available parking".into(),
        },
        Preference::LowestGasPrice => match field.and_then(|v| v.as_f64()) {
            Some(x) => format!("it has the lowest gas price nearby (${x:.3}/L)"),
            None => "no gas price is reported".into(),
        },
        Preference::ShortestLineup => match field.and_then(|v| v.as_f64()) {
            Some(x) => format!("it has the shortest lineup ({x} waiting)"),
            None => "no lineup count is reported".into(),
        },
    }
}

fn proximity(d: &ContextDocument) -> String {
    match d.travel_time_s {
        Some(t) => format!("{} away by car", format_travel_time(t)),
        None => format!("{:.1} km away", d.distance_m / 1000.0),
    }
}

fn short(d: &ContextDocument) -> String {
    let mut s = format!("{} ({}", d.display_name, proximity(d));
    if let Some(r) = d.rate {
        s.push_str(&format!(", rated {r:.1}"));
    }
    s.push(')');
    s
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    cs.next().map(|c| c.to_uppercase().chain(cs).collect()).unwrap_or_default()
}

/// Names the top-ranked document and says why.
pub fn generate_recommendation(docs: &[ContextDocument], prefs: &[Preference]) -> Value {
    if docs.is_empty() {
        return json!({ "answer": "I could not find a matching place nearby.", "alternatives": [], "reasons": [] });
    }
    let order = rank_documents(docs, prefs);
    let best = &docs[order[0]];
    let mut reasons: Vec<String> = prefs.iter().map(|&p| preference_reason(p, best)).collect();
    if let Some(o) = best.occupancy_factor {
        reasons.push(format!("it is about {:.0}% busy", o * 100.0));
    }
    let mut answer = format!(
        "I recommend {} ({}) at {}, {}",
        best.display_name,
        service_type_label(&best.service_name),
        if best.address.is_empty() { "the pinned location" } else { &best.address },
        proximity(best)
    );
    if let Some(r) = best.rate {
        answer.push_str(&format!(", rated {r:.1}"));
    }
    answer.push('.');
    if !reasons.is_empty() {
        answer.push_str(&format!(" {}.", capitalize(&reasons.join("; "))));
    }
    let alternatives: Vec<&ContextDocument> = order[1..].iter().take(2).map(|&i| &docs[i]).collect();
    if !alternatives.is_empty() {
        answer.push_str(&format!(" Alternatives: {}.", alternatives.iter().map(|d| short(d)).collect::<Vec<_>>().join(", ")));
    }
    json!({
        "answer": answer,
        "recommendation": best.display_name,
        "alternatives": alternatives.iter().map(|d| &d.display_name).collect::<Vec<_>>(),
        "reasons": reasons,
    })
}

fn generate_web(snippets: &[WebSnippet], place: Option<&str>) -> Value {
    let Some(top) = snippets.first() else {
        return json!({ "answer": "", "reasons": [] });
    };
    let source = if top.title.is_empty() { top.url.as_str() } else { top.title.as_str() };
    let answer = match weather_summary(&top.content) {
        Some(w) => match place {
            Some(p) => format!("It is currently {w} in {p}."),
            None => format!("It is currently {w}."),
        },
        None => format!("According to {source}: {}", truncate_utf8(&top.content, 400)),
    };
    json!({ "answer": answer, "reasons": [format!("source: {}", top.url)] })
}

impl LlmProvider for MockLlm {
    fn name(&self) -> &str {
        "mock"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError> {
        let reply = match request.role {
            AgentRole::Classifier => self.classify(&request.payload),
            AgentRole::Generator => self.generate(&request.payload),
            AgentRole::Reviewer => self.review(&request.payload),
        };
        Ok(reply.to_string())
    }
}

/// A reviewer outcome for [`ScriptedLlm`]; `Fail` is a provider error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScriptedReview {
    Verdict(Verdict),
    Fail,
}

/// Classifies every query to a fixed route and replays reviewer outcomes
/// in order, repeating the last one once the script runs out.
#[derive(Debug)]
pub struct ScriptedLlm {
    route: Route,
    reviews: Vec<ScriptedReview>,
    cursor: AtomicUsize,
}

impl ScriptedLlm {
    pub fn new(route: Route, reviews: Vec<ScriptedReview>) -> Self {
        Self { route, reviews, cursor: AtomicUsize::new(0) }
    }

    pub fn always(route: Route, verdict: Verdict) -> Self {
        Self::new(route, vec![ScriptedReview::Verdict(verdict)])
    }
}

impl LlmProvider for ScriptedLlm {
    fn name(&self) -> &str {
        "scripted"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError> {
        match request.role {
            AgentRole::Classifier => Ok(json!({ "route": self.route, "answer": "Scripted reply." }).to_string()),
            AgentRole::Generator => {
                let name = request.payload["documents"][0]["display_name"].as_str().unwrap_or("the first result");
                Ok(json!({ "answer": format!("Try {name}."), "recommendation": name }).to_string())
            }
            AgentRole::Reviewer => {
                let i = self.cursor.fetch_add(1, Ordering::SeqCst);
                let step = self.reviews.get(i).or(self.reviews.last()).copied();
                match step.unwrap_or(ScriptedReview::Verdict(Verdict::Accepted)) {
                    ScriptedReview::Verdict(v) => Ok(json!({ "verdict": v, "query": "scripted rewrite", "reason": "scripted" }).to_string()),
                    ScriptedReview::Fail => Err(ProviderError::Unavailable("scripted reviewer outage".into())),
                }
            }
        }
    }
}

/// Succeeds or fails per call from a script, repeating the last entry.
/// Successful calls return one stub document for the requested route.
#[derive(Debug)]
pub struct ScriptedDispatcher {
    outcomes: Vec<bool>,
    cursor: AtomicUsize,
}

impl ScriptedDispatcher {
    pub fn new(outcomes: Vec<bool>) -> Self {
        Self { outcomes, cursor: AtomicUsize::new(0) }
    }

    pub fn reliable() -> Self {
        Self::new(vec![true])
    }
}

impl Dispatcher for ScriptedDispatcher {
    fn retrieve(&self, route: Route, query: &str, location: &ResolvedLocation) -> Result<RetrievedContext, DispatchError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        let ok = self.outcomes.get(i).or(self.outcomes.last()).copied().unwrap_or(true);
        let source = route.source().ok_or_else(|| DispatchError::new("direct_answer has no retriever"))?;
        if !ok {
            return Err(DispatchError::new(format!("scripted failure on call {i}")));
        }
        let doc = ContextDocument {
            node_id: Some(format!("stub-{}", route.as_str())),
            service_name: "stub".into(),
            display_name: format!("Stub {}", route.as_str()),
            address: String::new(),
            location: location.point,
            rate: None,
            occupancy_factor: None,
            extra: Default::default(),
            distance_m: 0.0,
            travel_time_s: None,
            route_distance_m: None,
            updated_at: None,
            source_attribution: None,
        };
        Ok(RetrievedContext {
            source,
            query: query.to_string(),
            origin: location.point,
            matched_services: Vec::new(),
            documents: vec![doc],
            snippets: Vec::new(),
            unrouted: false,
            fixture_miss: false,
        })
    }
}
