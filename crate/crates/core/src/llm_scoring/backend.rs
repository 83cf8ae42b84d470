use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{format_scores, parse_scores, TRANSCRIPT_PREFIX};
use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::features::tokenize;

/// A text-completion model. Implementations must be safe to call concurrently.
pub trait LlmBackend: Send + Sync {
    /// Identifier used in cache keys and error messages.
    fn name(&self) -> &str;
    /// Whether calls leave the process.
    fn is_remote(&self) -> bool;
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String>;
}

pub trait Translator: Send + Sync {
    fn name(&self) -> &str;
    fn is_remote(&self) -> bool;
    /// Translates `text` from `source` into English.
    fn translate(&self, text: &str, source: Language) -> Result<String>;
}

pub fn language_code(language: Language) -> &'static str {
    match language {
        Language::Afrikaans => "af",
        Language::Isixhosa => "xh",
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn name(&self) -> &str {
        "identity"
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn translate(&self, text: &str, _source: Language) -> Result<String> {
        Ok(text.to_owned())
    }
}

/// Offline stand-in for an LLM: answers with the scores of the in-prompt
/// example whose transcript has the highest unigram cosine similarity to the
/// query. Ties go to the earliest example.
#[derive(Debug, Clone, Default)]
pub struct MockKnnBackend {
    /// Sleep before each answer, to mimic a remote call.
    pub simulated_latency: Duration,
}

fn unigram_counts(text: &str) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_insert(0.0) += 1.0;
    }
    counts
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, v)| b.get(k).map(|w| v * w)).sum();
    let norm = |m: &HashMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Splits a prompt back into `(transcript, score line)` examples and the query.
fn split_prompt(prompt: &str) -> Option<(Vec<(&str, &str)>, &str)> {
    let mut examples = Vec::new();
    let mut query = None;
    let mut lines = prompt.lines().peekable();
    while let Some(line) = lines.next() {
        let Some(text) = line.strip_prefix(TRANSCRIPT_PREFIX) else {
            continue;
        };
        match lines.peek() {
            Some(next) if parse_scores(next).is_ok() => {
                examples.push((text, *next));
                lines.next();
            }
            _ => query = Some(text),
        }
    }
    Some((examples, query?))
}

impl MockKnnBackend {
    pub fn new(simulated_latency: Duration) -> Self {
        MockKnnBackend { simulated_latency }
    }

    fn answer(prompt: &str) -> Result<String> {
        let (examples, query) = split_prompt(prompt)
            .ok_or_else(|| Error::backend("mock_knn", "prompt has no query transcript"))?;
        let q = unigram_counts(query);
        let mut best: Option<(f64, &str)> = None;
        for (text, scores) in examples {
            let sim = cosine(&q, &unigram_counts(text));
            if best.is_none_or(|(b, _)| sim > b) {
                best = Some((sim, scores));
            }
        }
        let (_, scores) = best.ok_or_else(|| Error::backend("mock_knn", "prompt has no examples"))?;
        let parsed = parse_scores(scores)?;
        Ok(format_scores(parsed.ns, parsed.cq, parsed.sc as u8))
    }
}

impl LlmBackend for MockKnnBackend {
    fn name(&self) -> &str {
        "mock_knn"
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn complete(&self, prompt: &str, _temperature: f64) -> Result<String> {
        if !self.simulated_latency.is_zero() {
            std::thread::sleep(self.simulated_latency);
        }
        Self::answer(prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RequestStyle {
    /// `{"model", "prompt", "temperature"}` → `/choices/0/text`.
    #[default]
    Completion,
    /// `{"model", "messages": [{"role": "user", ...}], "temperature"}` → `/choices/0/message/content`.
    Chat,
}

/// Where and how to reach an HTTP service. Holds only the *name* of the
/// credential variable, never the credential itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpEndpoint {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub style: RequestStyle,
    /// JSON pointer to the text in the response; defaults depend on the service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_pointer: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

fn default_timeout_s() -> f64 {
    60.0
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        HttpEndpoint {
            url: url.into(),
            model: None,
            api_key_env: None,
            style: RequestStyle::default(),
            response_pointer: None,
            timeout_s: default_timeout_s(),
        }
    }
}

struct HttpClient {
    name: String,
    endpoint: HttpEndpoint,
    client: reqwest::blocking::Client,
}

impl HttpClient {
    fn new(name: String, endpoint: HttpEndpoint) -> Result<Self> {
        if !(endpoint.timeout_s > 0.0 && endpoint.timeout_s.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name}: timeout must be positive")));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_s))
            .build()
            .map_err(|e| Error::backend(&name, e.to_string()))?;
        Ok(HttpClient { name, endpoint, client })
    }

    fn post(&self, body: &Value, default_pointer: &str) -> Result<String> {
        let mut request = self.client.post(&self.endpoint.url).json(body);
        if let Some(var) = &self.endpoint.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| Error::backend(&self.name, format!("credential variable {var} is not set")))?;
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Error::backend(&self.name, e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Error::backend(&self.name, e.to_string()))?;
        if !status.is_success() {
            return Err(Error::backend(&self.name, format!("HTTP {status}")));
        }
        let payload: Value = serde_json::from_str(&text)
            .map_err(|e| Error::backend(&self.name, format!("malformed payload: {e}")))?;
        let pointer = self.endpoint.response_pointer.as_deref().unwrap_or(default_pointer);
        payload
            .pointer(pointer)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| Error::backend(&self.name, format!("malformed payload: no string at {pointer}")))
    }
}

/// Single-turn completion over HTTP.
pub struct HttpLlmBackend {
    http: HttpClient,
}

impl HttpLlmBackend {
    pub fn new(endpoint: HttpEndpoint) -> Result<Self> {
        let model = endpoint
            .model
            .clone()
            .ok_or_else(|| Error::InvalidArgument("http LLM endpoint needs a model id".into()))?;
        Ok(HttpLlmBackend {
            http: HttpClient::new(format!("http:{model}"), endpoint)?,
        })
    }
}

impl LlmBackend for HttpLlmBackend {
    fn name(&self) -> &str {
        &self.http.name
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn complete(&self, prompt: &str, temperature: f64) -> Result<String> {
        let model = self.http.endpoint.model.as_deref().unwrap_or_default();
        let (body, pointer) = match self.http.endpoint.style {
            RequestStyle::Completion => (
                json!({"model": model, "prompt": prompt, "temperature": temperature}),
                "/choices/0/text",
            ),
            RequestStyle::Chat => (
                json!({
                    "model": model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": temperature,
                }),
                "/choices/0/message/content",
            ),
        };
        self.http.post(&body, pointer)
    }
}

/// Translation over HTTP: `{"q", "source", "target": "en", "format": "text"}`.
pub struct HttpTranslator {
    http: HttpClient,
}

impl HttpTranslator {
    pub fn new(endpoint: HttpEndpoint) -> Result<Self> {
        Ok(HttpTranslator {
            http: HttpClient::new("http_translate".into(), endpoint)?,
        })
    }
}

impl Translator for HttpTranslator {
    fn name(&self) -> &str {
        &self.http.name
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn translate(&self, text: &str, source: Language) -> Result<String> {
        let body = json!({
            "q": text,
            "source": language_code(source),
            "target": "en",
            "format": "text",
        });
        self.http.post(&body, "/data/translations/0/translatedText")
    }
}
