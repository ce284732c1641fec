//! The collect-store path: UIDI messages applied to the document store.
//!
//! Only `input` messages mutate documents. Conflicts resolve last-writer-wins
//! on `sent_at`; a message older than the document is rejected as stale.
//! Two messages for one node carrying the same `sent_at` are ordered by a
//! digest of their payload, so every arrival order converges.

mod simulate;

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::datamodel::{
    canonical_service_name, DeviceDocument, ExtraFieldSchema, Timestamp, Topic, UidiMessage,
    ValidationError,
};
use crate::docstore::{DocStore, StoreError};

pub use simulate::{OccupancyCurve, Schedule, StreamSimulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    #[error("stale: sent_at {sent_at} is older than the stored version {current}")]
    Stale { sent_at: Timestamp, current: Timestamp },
    #[error("invalid: {errors:?}")]
    Invalid { errors: Vec<ValidationError> },
    #[error("unknown node and payload cannot create it")]
    UnknownNode,
    #[error("malformed message: {detail}")]
    Malformed { detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplyOutcome {
    Updated(Arc<DeviceDocument>),
    Created(Arc<DeviceDocument>),
    /// Non-input topics are accepted and logged but change nothing.
    Ignored(Topic),
}

impl ApplyOutcome {
    pub fn document(&self) -> Option<&Arc<DeviceDocument>> {
        match self {
            ApplyOutcome::Updated(d) | ApplyOutcome::Created(d) => Some(d),
            ApplyOutcome::Ignored(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedMessage {
    pub node_id: String,
    #[serde(flatten)]
    pub reason: Rejection,
}

/// Summary of one ingestion call. `accepted + rejected == received`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub received: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub ignored: usize,
    /// Nodes created by input messages rather than updated.
    pub created: Vec<String>,
    pub rejections: Vec<RejectedMessage>,
}

impl IngestReport {
    fn record(&mut self, node_id: &str, result: &Result<ApplyOutcome, Rejection>) {
        self.received += 1;
        match result {
            Ok(outcome) => {
                self.accepted += 1;
                match outcome {
                    ApplyOutcome::Created(_) => self.created.push(node_id.to_string()),
                    ApplyOutcome::Ignored(_) => self.ignored += 1,
                    ApplyOutcome::Updated(_) => {}
                }
            }
            Err(reason) => {
                self.rejected += 1;
                self.rejections.push(RejectedMessage { node_id: node_id.to_string(), reason: reason.clone() });
            }
        }
    }
}

fn payload_digest(payload: &std::collections::BTreeMap<String, Value>) -> [u8; 32] {
    // BTreeMap keys are ordered, so the encoding is canonical.
    let bytes = serde_json::to_vec(payload).expect("json values serialize");
    Sha256::digest(bytes).into()
}

/// Applies a message payload to a document, producing the next version.
pub fn apply_payload(
    doc: &DeviceDocument,
    payload: &std::collections::BTreeMap<String, Value>,
    sent_at: Timestamp,
    schema: &ExtraFieldSchema,
) -> Result<DeviceDocument, Vec<ValidationError>> {
    let mut next = doc.clone();
    let mut errors = Vec::new();
    let mut lat = None;
    let mut lon = None;
    for (key, value) in payload {
        match key.as_str() {
            "node_id" => {
                if value.as_str() != Some(doc.node_id.as_str()) {
                    errors.push(ValidationError::ImmutableField { field: key.clone() });
                }
            }
            "service_name" => {
                if value.as_str().map(canonical_service_name).as_deref() != Some(doc.service_name.as_str()) {
                    errors.push(ValidationError::ImmutableField { field: key.clone() });
                }
            }
            "display_name" | "address" => match value.as_str() {
                Some(s) if key == "display_name" => next.display_name = s.to_string(),
                Some(s) => next.address = s.to_string(),
                None => errors.push(ValidationError::WrongType { field: key.clone(), expected: "string".into() }),
            },
            "location" => match crate::datamodel::parse_location(Some(value)) {
                Ok(p) => next.location = p,
                Err(e) => errors.push(e),
            },
            "lat" => lat = Some(value),
            "lon" => lon = Some(value),
            "rate" | "occupancy_factor" => {
                let parsed = match value {
                    Value::Null => Ok(None),
                    Value::Number(n) => Ok(n.as_f64()),
                    _ => Err(ValidationError::WrongType { field: key.clone(), expected: "number or null".into() }),
                };
                match parsed {
                    Ok(v) if key == "rate" => next.rate = v,
                    Ok(v) => next.occupancy_factor = v,
                    Err(e) => errors.push(e),
                }
            }
            "updated_at" => errors.push(ValidationError::ImmutableField { field: key.clone() }),
            _ => {
                if value.is_null() {
                    next.extra.remove(key);
                    continue;
                }
                match schema.kind_for(&doc.service_name, key) {
                    None => errors.push(ValidationError::UnknownExtraField {
                        service: doc.service_name.clone(),
                        field: key.clone(),
                    }),
                    Some(kind) => match kind.coerce(value) {
                        Some(v) => {
                            next.extra.insert(key.clone(), v);
                        }
                        None => errors.push(ValidationError::ExtraFieldType { field: key.clone(), expected: kind }),
                    },
                }
            }
        }
    }
    if lat.is_some() || lon.is_some() {
        let mut obj = serde_json::Map::new();
        obj.insert("lat".into(), lat.cloned().unwrap_or(Value::from(doc.location.lat())));
        obj.insert("lon".into(), lon.cloned().unwrap_or(Value::from(doc.location.lon())));
        match crate::datamodel::parse_location(Some(&Value::Object(obj))) {
            Ok(p) => next.location = p,
            Err(e) => errors.push(e),
        }
    }
    if let Some(r) = next.rate.filter(|r| !(0.0..=5.0).contains(r)) {
        errors.push(ValidationError::RateOutOfRange { value: r });
    }
    if let Some(o) = next.occupancy_factor.filter(|o| !(0.0..=1.0).contains(o)) {
        errors.push(ValidationError::OccupancyOutOfRange { value: o });
    }
    next.updated_at = sent_at;
    if errors.is_empty() {
        Ok(next)
    } else {
        Err(errors)
    }
}

/// Builds a brand-new document from a creating input message.
fn document_from_payload(msg: &UidiMessage, schema: &ExtraFieldSchema) -> Result<DeviceDocument, Rejection> {
    let service = msg.payload.get("service_name").and_then(Value::as_str);
    let name = msg.payload.get("display_name").and_then(Value::as_str);
    let has_location = msg.payload.contains_key("location")
        || (msg.payload.contains_key("lat") && msg.payload.contains_key("lon"));
    let (Some(service), Some(name), true) = (service, name, has_location) else {
        return Err(Rejection::UnknownNode);
    };
    let seed = DeviceDocument {
        node_id: msg.node_id.clone(),
        service_name: canonical_service_name(service),
        display_name: name.to_string(),
        address: String::new(),
        location: crate::datamodel::GeoPoint::new(0.0, 0.0).expect("origin"),
        rate: None,
        occupancy_factor: None,
        extra: Default::default(),
        updated_at: msg.sent_at,
    };
    apply_payload(&seed, &msg.payload, msg.sent_at, schema).map_err(|errors| Rejection::Invalid { errors })
}

pub struct Ingestor {
    store: Arc<DocStore>,
    /// Payload digest of the last applied message per node, for equal-timestamp ties.
    last_digest: Mutex<HashMap<String, [u8; 32]>>,
}

impl Ingestor {
    pub fn new(store: Arc<DocStore>) -> Self {
        Self { store, last_digest: Mutex::new(HashMap::new()) }
    }

    pub fn store(&self) -> &Arc<DocStore> {
        &self.store
    }

    pub fn apply_message(&self, msg: &UidiMessage) -> Result<ApplyOutcome, Rejection> {
        if msg.topic != Topic::Input {
            tracing::debug!(node = %msg.node_id, topic = %msg.topic, "non-input message ignored");
            return Ok(ApplyOutcome::Ignored(msg.topic));
        }
        if msg.node_id.is_empty() {
            return Err(Rejection::Malformed { detail: "empty node_id".into() });
        }
        let digest = payload_digest(&msg.payload);
        let schema = self.store.schema().clone();
        let result = self.store.update(&msg.node_id, |current| {
            if msg.sent_at < current.updated_at {
                return Err(Rejection::Stale { sent_at: msg.sent_at, current: current.updated_at });
            }
            if msg.sent_at == current.updated_at {
                let last = self.last_digest.lock().get(&msg.node_id).copied();
                if last.is_some_and(|l| digest < l) {
                    return Err(Rejection::Stale { sent_at: msg.sent_at, current: current.updated_at });
                }
            }
            let next = apply_payload(current, &msg.payload, msg.sent_at, &schema)
                .map_err(|errors| Rejection::Invalid { errors })?;
            self.last_digest.lock().insert(msg.node_id.clone(), digest);
            Ok(Some(next))
        });
        match result {
            Ok(Ok(doc)) => Ok(ApplyOutcome::Updated(doc)),
            Ok(Err(rejection)) => Err(rejection),
            Err(StoreError::NotFound(_)) => {
                let doc = document_from_payload(msg, &schema)?;
                match self.store.insert_new(doc) {
                    Ok(doc) => {
                        self.last_digest.lock().insert(msg.node_id.clone(), digest);
                        Ok(ApplyOutcome::Created(doc))
                    }
                    // Lost a creation race; retry as an update.
                    Err(StoreError::AlreadyExists(_)) => self.apply_message(msg),
                    Err(StoreError::Invalid(errors)) => Err(Rejection::Invalid { errors }),
                    Err(e) => Err(Rejection::Malformed { detail: e.to_string() }),
                }
            }
            Err(StoreError::Invalid(errors)) => Err(Rejection::Invalid { errors }),
            Err(e) => Err(Rejection::Malformed { detail: e.to_string() }),
        }
    }

    /// Applies a batch in (sent_at, node_id) order.
    pub fn ingest_batch(&self, messages: &[UidiMessage]) -> IngestReport {
        let mut order: Vec<&UidiMessage> = messages.iter().collect();
        order.sort_by(|a, b| a.sent_at.cmp(&b.sent_at).then_with(|| a.node_id.cmp(&b.node_id)));
        let mut report = IngestReport::default();
        for msg in order {
            let result = self.apply_message(msg);
            report.record(&msg.node_id, &result);
        }
        report
    }

    /// Parses and applies a request body: one JSON message, a JSON array, or NDJSON.
    /// Unparseable lines count as rejected.
    pub fn ingest_body(&self, body: &str) -> IngestReport {
        let (messages, failures) = parse_messages(body);
        let mut report = self.ingest_batch(&messages);
        for (line, detail) in failures {
            report.received += 1;
            report.rejected += 1;
            report.rejections.push(RejectedMessage {
                node_id: String::new(),
                reason: Rejection::Malformed { detail: format!("line {line}: {detail}") },
            });
        }
        report
    }
}

/// Splits a body into messages plus (line number, error) for lines that failed to parse.
pub fn parse_messages(body: &str) -> (Vec<UidiMessage>, Vec<(usize, String)>) {
    let trimmed = body.trim();
    if trimmed.is_empty() {
        return (Vec::new(), Vec::new());
    }
    if let Ok(one) = serde_json::from_str::<UidiMessage>(trimmed) {
        return (vec![one], Vec::new());
    }
    if trimmed.starts_with('[') {
        return match serde_json::from_str::<Vec<UidiMessage>>(trimmed) {
            Ok(all) => (all, Vec::new()),
            Err(e) => (Vec::new(), vec![(1, e.to_string())]),
        };
    }
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<UidiMessage>(line) {
            Ok(m) => ok.push(m),
            Err(e) => failed.push((i + 1, e.to_string())),
        }
    }
    (ok, failed)
}
