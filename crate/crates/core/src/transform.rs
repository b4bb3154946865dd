//! Text-transform clients.
//!
//! Every language-model step of the pipeline goes through
//! [`TextTransformClient`]. Three implementations exist:
//!
//! * [`RuleFallback`]: deterministic rules, always available offline.
//! * [`RemoteService`]: `POST <endpoint>/v1/transform` with JSON
//!   `{"task": ..., "inputs": {...}}`, answered by
//!   `{"ok": true, "output": {...}}` or `{"ok": false, "error": "..."}`.
//! * [`ReplayTranscript`]: replays recorded request/output pairs from JSONL.
//!
//! All of them return typed values; nothing downstream re-parses prose.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::claim::{fallback_correct, render_correction_prompt, CorrectionRequest};
use crate::decompose::{activate_rules, decompose_rules, ActivationResult, IconicAction};
use crate::harness::{task1_question_template, task2_question_template, Relation};
use crate::parse::{classify_order, parse_timestamps, OrderLabel, TimestampSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transform service unavailable: {0}")]
    Unavailable(String),
    #[error("transform service error: {0}")]
    Service(String),
    #[error("malformed transform output: {0}")]
    Protocol(String),
    #[error("no recorded `{task}` exchange for inputs {key}")]
    NotInTranscript { task: String, key: String },
    #[error("decomposition produced no actions")]
    EmptyDecomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformTask {
    Activate,
    Decompose,
    Task1Question,
    Task2Question,
    ParseTimestamps,
    ClassifyOrder,
    Correct,
}

impl TransformTask {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransformTask::Activate => "activate",
            TransformTask::Decompose => "decompose",
            TransformTask::Task1Question => "task1_question",
            TransformTask::Task2Question => "task2_question",
            TransformTask::ParseTimestamps => "parse_timestamps",
            TransformTask::ClassifyOrder => "classify_order",
            TransformTask::Correct => "correct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRequest {
    pub task: TransformTask,
    pub inputs: BTreeMap<String, String>,
}

impl TransformRequest {
    fn new(task: TransformTask, inputs: &[(&str, String)]) -> Self {
        Self {
            task,
            inputs: inputs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    fn input(&self, key: &str) -> Result<&str, ClientError> {
        self.inputs
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ClientError::Protocol(format!("missing input `{key}`")))
    }

    fn key(&self) -> String {
        serde_json::to_string(&self.inputs).expect("string map serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TransformResponse {
    pub fn into_output(self) -> Result<Value, ClientError> {
        match (self.ok, self.output) {
            (true, Some(v)) => Ok(v),
            (true, None) => Err(ClientError::Protocol("ok response without output".into())),
            (false, _) => Err(ClientError::Service(
                self.error.unwrap_or_else(|| "unspecified error".into()),
            )),
        }
    }
}

pub trait TextTransformClient: Send + Sync {
    fn name(&self) -> &str;
    fn activate(&self, query: &str) -> Result<ActivationResult, ClientError>;
    fn decompose(&self, event_text: &str) -> Result<Vec<IconicAction>, ClientError>;
    fn task1_question(&self, caption: &str) -> Result<String, ClientError>;
    fn task2_question(
        &self,
        event_a: &str,
        event_b: &str,
        relation: Relation,
    ) -> Result<String, ClientError>;
    fn parse_timestamps(&self, response: &str, duration: f64) -> Result<TimestampSet, ClientError>;
    fn classify_order(&self, response: &str) -> Result<OrderLabel, ClientError>;
    fn correct(&self, request: &CorrectionRequest) -> Result<String, ClientError>;
}

/// Deterministic offline implementation.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleFallback;

impl TextTransformClient for RuleFallback {
    fn name(&self) -> &str {
        "rule-fallback"
    }

    fn activate(&self, query: &str) -> Result<ActivationResult, ClientError> {
        Ok(activate_rules(query))
    }

    fn decompose(&self, event_text: &str) -> Result<Vec<IconicAction>, ClientError> {
        let actions = decompose_rules(event_text);
        if actions.is_empty() {
            return Err(ClientError::EmptyDecomposition);
        }
        Ok(IconicAction::indexed(actions))
    }

    fn task1_question(&self, caption: &str) -> Result<String, ClientError> {
        Ok(task1_question_template(caption))
    }

    fn task2_question(&self, a: &str, b: &str, relation: Relation) -> Result<String, ClientError> {
        Ok(task2_question_template(a, b, relation))
    }

    fn parse_timestamps(&self, response: &str, duration: f64) -> Result<TimestampSet, ClientError> {
        Ok(parse_timestamps(response, duration))
    }

    fn classify_order(&self, response: &str) -> Result<OrderLabel, ClientError> {
        Ok(classify_order(response))
    }

    fn correct(&self, request: &CorrectionRequest) -> Result<String, ClientError> {
        Ok(fallback_correct(request))
    }
}

/// Answers one wire request with the rule fallback. This is the reference
/// behaviour a remote service must match structurally.
pub fn handle_transform(request: &TransformRequest) -> TransformResponse {
    match fallback_output(request) {
        Ok(output) => TransformResponse {
            ok: true,
            output: Some(output),
            error: None,
        },
        Err(e) => TransformResponse {
            ok: false,
            output: None,
            error: Some(e.to_string()),
        },
    }
}

fn fallback_output(request: &TransformRequest) -> Result<Value, ClientError> {
    let rules = RuleFallback;
    Ok(match request.task {
        TransformTask::Activate => serde_json::to_value(rules.activate(request.input("query")?)?)
            .expect("activation serializes"),
        TransformTask::Decompose => {
            json!({ "actions": decompose_rules(request.input("event_text")?) })
        }
        TransformTask::Task1Question => {
            json!({ "question": rules.task1_question(request.input("caption")?)? })
        }
        TransformTask::Task2Question => {
            let relation: Relation = request
                .input("relation")?
                .parse()
                .map_err(ClientError::Protocol)?;
            json!({ "question": rules.task2_question(request.input("event_a")?, request.input("event_b")?, relation)? })
        }
        TransformTask::ParseTimestamps => {
            let duration = parse_duration(request.input("duration")?)?;
            serde_json::to_value(rules.parse_timestamps(request.input("response")?, duration)?)
                .expect("timestamp set serializes")
        }
        TransformTask::ClassifyOrder => {
            json!({ "label": rules.classify_order(request.input("response")?)? })
        }
        TransformTask::Correct => {
            let facts: Vec<String> = request
                .input("facts")?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            let corrected = crate::claim::fallback_correct_lines(request.input("original_answer")?, &facts);
            json!({ "response": corrected })
        }
    })
}

fn parse_duration(text: &str) -> Result<f64, ClientError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|d| d.is_finite() && *d > 0.0)
        .ok_or_else(|| ClientError::Protocol(format!("bad duration `{text}`")))
}

/// Moves one request to wherever it is answered.
pub trait Transport: Send + Sync {
    fn call(&self, request: &TransformRequest) -> Result<Value, ClientError>;
}

/// Client speaking the JSON protocol over any [`Transport`].
pub struct WireClient<T> {
    name: String,
    transport: T,
}

impl<T: Transport> WireClient<T> {
    pub fn new(name: impl Into<String>, transport: T) -> Self {
        Self {
            name: name.into(),
            transport,
        }
    }

    fn call(&self, task: TransformTask, inputs: &[(&str, String)]) -> Result<Value, ClientError> {
        self.transport.call(&TransformRequest::new(task, inputs))
    }

    fn string_field(value: &Value, field: &str) -> Result<String, ClientError> {
        value
            .get(field)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol(format!("missing string field `{field}`")))
    }
}

fn decode<D: serde::de::DeserializeOwned>(value: Value) -> Result<D, ClientError> {
    serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
}

impl<T: Transport> TextTransformClient for WireClient<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn activate(&self, query: &str) -> Result<ActivationResult, ClientError> {
        let out: ActivationResult =
            decode(self.call(TransformTask::Activate, &[("query", query.to_string())])?)?;
        if !out.needs_temporal_support && !out.event_texts.is_empty() {
            return Err(ClientError::Protocol(
                "event texts returned for a non-temporal query".into(),
            ));
        }
        Ok(out)
    }

    fn decompose(&self, event_text: &str) -> Result<Vec<IconicAction>, ClientError> {
        #[derive(Deserialize)]
        struct Out {
            actions: Vec<String>,
        }
        let out: Out = decode(self.call(
            TransformTask::Decompose,
            &[("event_text", event_text.to_string())],
        )?)?;
        let actions: Vec<String> = out
            .actions
            .into_iter()
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty())
            .collect();
        if actions.is_empty() {
            return Err(ClientError::EmptyDecomposition);
        }
        Ok(IconicAction::indexed(actions))
    }

    fn task1_question(&self, caption: &str) -> Result<String, ClientError> {
        let v = self.call(TransformTask::Task1Question, &[("caption", caption.to_string())])?;
        Self::string_field(&v, "question")
    }

    fn task2_question(&self, a: &str, b: &str, relation: Relation) -> Result<String, ClientError> {
        let v = self.call(
            TransformTask::Task2Question,
            &[
                ("event_a", a.to_string()),
                ("event_b", b.to_string()),
                ("relation", relation.as_str().to_string()),
            ],
        )?;
        Self::string_field(&v, "question")
    }

    fn parse_timestamps(&self, response: &str, duration: f64) -> Result<TimestampSet, ClientError> {
        decode(self.call(
            TransformTask::ParseTimestamps,
            &[
                ("response", response.to_string()),
                ("duration", duration.to_string()),
            ],
        )?)
    }

    fn classify_order(&self, response: &str) -> Result<OrderLabel, ClientError> {
        #[derive(Deserialize)]
        struct Out {
            label: OrderLabel,
        }
        let out: Out = decode(self.call(
            TransformTask::ClassifyOrder,
            &[("response", response.to_string())],
        )?)?;
        Ok(out.label)
    }

    fn correct(&self, request: &CorrectionRequest) -> Result<String, ClientError> {
        let v = self.call(
            TransformTask::Correct,
            &[
                ("question", request.user_query.clone()),
                ("original_answer", request.original_response.clone()),
                ("facts", request.claim.lines.join("\n")),
                ("prompt", render_correction_prompt(request)),
            ],
        )?;
        let text = Self::string_field(&v, "response")?;
        if text.trim().is_empty() {
            return Err(ClientError::Protocol("empty corrected response".into()));
        }
        Ok(text)
    }
}

/// Recorded exchanges, one JSON object per line:
/// `{"task": "...", "inputs": {...}, "output": {...}}`.
#[derive(Debug, Default)]
pub struct TranscriptTransport {
    exchanges: HashMap<(TransformTask, String), Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub task: TransformTask,
    pub inputs: BTreeMap<String, String>,
    pub output: Value,
}

impl TranscriptTransport {
    pub fn from_jsonl(text: &str) -> Result<Self, ClientError> {
        let mut exchanges = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(line)
                .map_err(|e| ClientError::Protocol(format!("transcript line {}: {e}", i + 1)))?;
            let req = TransformRequest {
                task: entry.task,
                inputs: entry.inputs,
            };
            exchanges.insert((req.task, req.key()), entry.output);
        }
        Ok(Self { exchanges })
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Unavailable(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

impl Transport for TranscriptTransport {
    fn call(&self, request: &TransformRequest) -> Result<Value, ClientError> {
        let key = request.key();
        self.exchanges
            .get(&(request.task, key.clone()))
            .cloned()
            .ok_or_else(|| ClientError::NotInTranscript {
                task: request.task.as_str().to_string(),
                key,
            })
    }
}

pub type ReplayTranscript = WireClient<TranscriptTransport>;

impl ReplayTranscript {
    pub fn from_path(path: &Path) -> Result<Self, ClientError> {
        Ok(WireClient::new("replay", TranscriptTransport::load(path)?))
    }
}

#[cfg(feature = "remote")]
pub use http::{HttpTransport, RemoteService};

#[cfg(feature = "remote")]
mod http {
    use std::sync::{Condvar, Mutex};
    use std::time::Duration;

    use super::*;

    /// Counting gate bounding concurrent in-flight requests.
    struct Gate {
        in_flight: Mutex<usize>,
        freed: Condvar,
        limit: usize,
    }

    impl Gate {
        fn acquire(&self) -> GateGuard<'_> {
            let mut n = self.in_flight.lock().expect("gate poisoned");
            while *n >= self.limit {
                n = self.freed.wait(n).expect("gate poisoned");
            }
            *n += 1;
            GateGuard(self)
        }
    }

    struct GateGuard<'a>(&'a Gate);

    impl Drop for GateGuard<'_> {
        fn drop(&mut self) {
            *self.0.in_flight.lock().expect("gate poisoned") -= 1;
            self.0.freed.notify_one();
        }
    }

    pub struct HttpTransport {
        url: String,
        client: reqwest::blocking::Client,
        retries: usize,
        gate: Gate,
    }

    impl HttpTransport {
        pub fn new(
            endpoint: &str,
            timeout: Duration,
            retries: usize,
            max_in_flight: usize,
        ) -> Result<Self, ClientError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| ClientError::Unavailable(e.to_string()))?;
            Ok(Self {
                url: format!("{}/v1/transform", endpoint.trim_end_matches('/')),
                client,
                retries,
                gate: Gate {
                    in_flight: Mutex::new(0),
                    freed: Condvar::new(),
                    limit: max_in_flight.max(1),
                },
            })
        }
    }

    impl Transport for HttpTransport {
        fn call(&self, request: &TransformRequest) -> Result<Value, ClientError> {
            let _slot = self.gate.acquire();
            let mut last = String::new();
            for _ in 0..=self.retries {
                match self
                    .client
                    .post(&self.url)
                    .json(request)
                    .send()
                    .and_then(|r| r.error_for_status())
                    .and_then(|r| r.json::<TransformResponse>())
                {
                    Ok(resp) => return resp.into_output(),
                    Err(e) => last = e.to_string(),
                }
            }
            Err(ClientError::Unavailable(last))
        }
    }

    pub type RemoteService = WireClient<HttpTransport>;

    impl RemoteService {
        pub fn connect(
            endpoint: &str,
            timeout: Duration,
            retries: usize,
            max_in_flight: usize,
        ) -> Result<Self, ClientError> {
            Ok(WireClient::new(
                "remote",
                HttpTransport::new(endpoint, timeout, retries, max_in_flight)?,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Routes wire requests straight into the reference handler.
    struct Loopback;

    impl Transport for Loopback {
        fn call(&self, request: &TransformRequest) -> Result<Value, ClientError> {
            let wire = serde_json::to_string(request).unwrap();
            let parsed: TransformRequest = serde_json::from_str(&wire).unwrap();
            let reply = serde_json::to_string(&handle_transform(&parsed)).unwrap();
            serde_json::from_str::<TransformResponse>(&reply)
                .unwrap()
                .into_output()
        }
    }

    #[test]
    fn wire_client_matches_rules() {
        let wire = WireClient::new("loop", Loopback);
        let rules = RuleFallback;
        for q in ["When did the person open the door?", "What color is the sofa?"] {
            assert_eq!(wire.activate(q).unwrap(), rules.activate(q).unwrap());
        }
        let e = "Person pours water then drinks it.";
        assert_eq!(wire.decompose(e).unwrap(), rules.decompose(e).unwrap());
        let r = "from 3.2 second to 4.5 second";
        assert_eq!(
            wire.parse_timestamps(r, 30.0).unwrap(),
            rules.parse_timestamps(r, 30.0).unwrap()
        );
        assert_eq!(wire.classify_order("No.").unwrap(), OrderLabel::No);
        assert_eq!(
            wire.task2_question("a", "b", Relation::After).unwrap(),
            rules.task2_question("a", "b", Relation::After).unwrap()
        );
        assert_eq!(wire.decompose(" , "), Err(ClientError::EmptyDecomposition));
    }

    #[test]
    fn request_wire_format() {
        let req = TransformRequest::new(TransformTask::Task1Question, &[("caption", "x".into())]);
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"task":"task1_question","inputs":{"caption":"x"}}"#
        );
        let bad = TransformResponse {
            ok: false,
            output: None,
            error: Some("quota".into()),
        };
        assert_eq!(bad.into_output(), Err(ClientError::Service("quota".into())));
    }

    #[test]
    fn replay_transcript_lookup() {
        let jsonl = r#"{"task":"activate","inputs":{"query":"When does he sit?"},"output":{"needs_temporal_support":true,"event_texts":["he sits"]}}
{"task":"classify_order","inputs":{"response":"maybe"},"output":{"label":"NoInfo"}}
{"task":"activate","inputs":{"query":"bad"},"output":{"needs_temporal_support":false,"event_texts":["x"]}}"#;
        let client = WireClient::new("replay", TranscriptTransport::from_jsonl(jsonl).unwrap());
        let act = client.activate("When does he sit?").unwrap();
        assert_eq!(act.event_texts, vec!["he sits"]);
        assert_eq!(client.classify_order("maybe").unwrap(), OrderLabel::NoInfo);
        assert!(matches!(
            client.classify_order("unseen"),
            Err(ClientError::NotInTranscript { .. })
        ));
        assert!(matches!(client.activate("bad"), Err(ClientError::Protocol(_))));
    }

    #[test]
    fn handler_reports_bad_inputs() {
        let req = TransformRequest::new(TransformTask::ParseTimestamps, &[("response", "at 3 s".into())]);
        let resp = handle_transform(&req);
        assert!(!resp.ok);
        let req = TransformRequest::new(
            TransformTask::ParseTimestamps,
            &[("response", "at 3 s".into()), ("duration", "-2".into())],
        );
        assert!(!handle_transform(&req).ok);
    }
}
