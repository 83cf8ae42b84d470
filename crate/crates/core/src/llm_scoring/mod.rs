//! In-context LLM scoring: prompt assembly, translation, backends, response
//! parsing and a persistent response cache.

mod backend;
mod cache;
mod prompt;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use backend::{
    language_code, HttpEndpoint, HttpLlmBackend, HttpTranslator, IdentityTranslator, LlmBackend, MockKnnBackend,
    RequestStyle, Translator,
};
pub use cache::DiskCache;
pub use prompt::{
    build_prompt, build_prompt_within_budget, estimate_tokens, format_scores, parse_scores, prompt_text,
    ParsedScores, PromptExample, INSTRUCTION, TRANSCRIPT_PREFIX,
};

use crate::corpus::{requires_intervention, ChildRecord, Corpus, Language, Split, TranscriptVariant, Task, SC_MAX, SC_MIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorKind {
    #[default]
    Identity,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    #[default]
    MockKnn,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub translator: TranslatorKind,
    pub llm: LlmKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm_endpoint: Option<HttpEndpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translate_endpoint: Option<HttpEndpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Extra attempts after a failed or unparsable response.
    pub max_retries: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_prompt_tokens: Option<usize>,
    /// Artificial per-call delay for the mock backend.
    pub mock_latency_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            translator: TranslatorKind::Identity,
            llm: LlmKind::MockKnn,
            llm_endpoint: None,
            translate_endpoint: None,
            cache_dir: None,
            max_retries: 3,
            temperature: 0.0,
            max_in_flight: 4,
            max_prompt_tokens: None,
            mock_latency_ms: 0,
        }
    }
}

impl BackendConfig {
    pub fn build_llm(&self) -> Result<Box<dyn LlmBackend>> {
        Ok(match self.llm {
            LlmKind::MockKnn => Box::new(MockKnnBackend::new(Duration::from_millis(self.mock_latency_ms))),
            LlmKind::Http => {
                let endpoint = self
                    .llm_endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("llm = http needs llm_endpoint".into()))?;
                Box::new(HttpLlmBackend::new(endpoint)?)
            }
        })
    }

    pub fn build_translator(&self) -> Result<Box<dyn Translator>> {
        Ok(match self.translator {
            TranslatorKind::Identity => Box::new(IdentityTranslator),
            TranslatorKind::Http => {
                let endpoint = self
                    .translate_endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("translator = http needs translate_endpoint".into()))?;
                Box::new(HttpTranslator::new(endpoint)?)
            }
        })
    }
}

/// Scores parsed from one LLM response, clamped and rounded to valid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmScore {
    pub ns: f64,
    pub cq: f64,
    pub sc: u8,
    pub ri: bool,
    pub raw_response: String,
}

/// Nearest category in `SC_MIN..=SC_MAX`; halves round down.
pub fn round_sc(value: f64) -> u8 {
    let r = (value - 0.5).ceil();
    r.clamp(f64::from(SC_MIN), f64::from(SC_MAX)) as u8
}

impl LlmScore {
    pub fn from_parsed(parsed: ParsedScores, raw_response: String) -> Self {
        let clamp = |task: Task, v: f64| {
            let (lo, hi) = task.range().expect("regression task has a range");
            v.clamp(lo, hi)
        };
        let sc = round_sc(parsed.sc);
        LlmScore {
            ns: clamp(Task::Ns, parsed.ns),
            cq: clamp(Task::Cq, parsed.cq),
            sc,
            ri: requires_intervention(sc),
            raw_response,
        }
    }
}

/// Wraps a translator with an in-memory and optional on-disk cache keyed by
/// (backend, source language, text).
pub struct CachedTranslator {
    inner: Box<dyn Translator>,
    disk: Option<DiskCache>,
    memory: Mutex<HashMap<(Language, String), String>>,
    max_retries: u32,
    calls: AtomicUsize,
}

impl CachedTranslator {
    pub fn new(inner: Box<dyn Translator>, disk: Option<DiskCache>, max_retries: u32) -> Self {
        CachedTranslator {
            inner,
            disk,
            memory: Mutex::new(HashMap::new()),
            max_retries,
            calls: AtomicUsize::new(0),
        }
    }

    /// Calls that reached the wrapped translator.
    pub fn inner_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn is_remote(&self) -> bool {
        self.inner.is_remote()
    }

    pub fn translate(&self, text: &str, source: Language) -> Result<String> {
        let mem_key = (source, text.to_owned());
        if let Some(hit) = self.memory.lock().expect("translation cache lock").get(&mem_key) {
            return Ok(hit.clone());
        }
        let request = json!({
            "kind": "translation",
            "backend": self.inner.name(),
            "source": language_code(source),
            "text": text,
        });
        let cacheable = self.inner.is_remote();
        if cacheable {
            if let Some(hit) = self.disk.as_ref().map(|d| d.get(&request)).transpose()?.flatten() {
                self.memory.lock().expect("translation cache lock").insert(mem_key, hit.clone());
                return Ok(hit);
            }
        }
        let mut last_err = None;
        for _ in 0..=self.max_retries {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.inner.translate(text, source) {
                Ok(out) => {
                    if cacheable {
                        if let Some(d) = &self.disk {
                            d.put(&request, &out)?;
                        }
                    }
                    self.memory.lock().expect("translation cache lock").insert(mem_key, out.clone());
                    return Ok(out);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerStats {
    /// Completion calls that reached the LLM backend.
    pub llm_calls: usize,
    /// Completion responses served from the disk cache.
    pub cache_hits: usize,
    /// Calls that reached the translator.
    pub translator_calls: usize,
    /// Calls (LLM or translator) that left the process.
    pub network_calls: usize,
    /// Most examples dropped from any prompt to fit the token budget.
    pub dropped_examples: usize,
}

fn with_child(err: Error, child_id: &str) -> Error {
    match err {
        Error::Backend { backend, message } => Error::Backend {
            backend,
            message: format!("child {child_id}: {message}"),
        },
        other => other,
    }
}

/// In-context scorer bound to one corpus: the train split supplies the
/// prompt examples, in corpus order.
pub struct LlmScorer {
    config: BackendConfig,
    variant: TranscriptVariant,
    language: Language,
    llm: Box<dyn LlmBackend>,
    translator: CachedTranslator,
    cache: Option<DiskCache>,
    examples: Vec<PromptExample>,
    train_ids: Vec<String>,
    llm_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    dropped: AtomicUsize,
}

impl LlmScorer {
    pub fn new(corpus: &Corpus, variant: TranscriptVariant, config: &BackendConfig) -> Result<Self> {
        Self::with_backends(corpus, variant, config, config.build_llm()?, config.build_translator()?)
    }

    /// Like [`LlmScorer::new`] with caller-supplied backends.
    pub fn with_backends(
        corpus: &Corpus,
        variant: TranscriptVariant,
        config: &BackendConfig,
        llm: Box<dyn LlmBackend>,
        translator: Box<dyn Translator>,
    ) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::InvalidArgument("max_in_flight must be at least 1".into()));
        }
        let cache = config.cache_dir.as_ref().map(DiskCache::open).transpose()?;
        let translator = CachedTranslator::new(translator, cache.clone(), config.max_retries);
        let train: Vec<&ChildRecord> = corpus.split(Split::Train).collect();
        if train.is_empty() {
            return Err(Error::Corpus("train split is empty; no prompt examples".into()));
        }
        let mut scorer = LlmScorer {
            config: config.clone(),
            variant,
            language: corpus.language(),
            llm,
            translator,
            cache,
            examples: Vec::new(),
            train_ids: train.iter().map(|r| r.child_id.clone()).collect(),
            llm_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            dropped: AtomicUsize::new(0),
        };
        let pool = scorer.pool()?;
        let examples = pool.install(|| {
            train
                .par_iter()
                .map(|r| {
                    let truth = r
                        .truth
                        .ok_or_else(|| Error::Corpus(format!("train record {} has no scores", r.child_id)))?;
                    Ok(PromptExample {
                        transcript: scorer.prepare_text(r)?,
                        ns: truth.ns,
                        cq: truth.cq,
                        sc: truth.sc,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        scorer.examples = examples;
        Ok(scorer)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.max_in_flight)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }

    fn prepare_text(&self, record: &ChildRecord) -> Result<String> {
        let text = prompt_text(record.require_transcript(self.variant)?);
        self.translator
            .translate(&text, self.language)
            .map(|t| prompt_text(&t))
            .map_err(|e| with_child(e, &record.child_id))
    }

    pub fn examples(&self) -> &[PromptExample] {
        &self.examples
    }

    pub fn stats(&self) -> ScorerStats {
        let llm_calls = self.llm_calls.load(Ordering::SeqCst);
        let translator_calls = self.translator.inner_calls();
        let mut network_calls = 0;
        if self.llm.is_remote() {
            network_calls += llm_calls;
        }
        if self.translator.is_remote() {
            network_calls += translator_calls;
        }
        ScorerStats {
            llm_calls,
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            translator_calls,
            network_calls,
            dropped_examples: self.dropped.load(Ordering::SeqCst),
        }
    }

    /// The exact prompt sent for `record` and the number of dropped examples.
    pub fn prompt_for(&self, record: &ChildRecord) -> Result<(String, usize)> {
        if record.split == Split::Train || self.train_ids.contains(&record.child_id) {
            return Err(Error::InvalidArgument(format!(
                "{} is a train record and cannot be scored against its own prompt",
                record.child_id
            )));
        }
        let query = self.prepare_text(record)?;
        build_prompt_within_budget(&self.examples, &query, self.config.max_prompt_tokens)
    }

    pub fn score(&self, record: &ChildRecord) -> Result<LlmScore> {
        let (prompt, dropped) = self.prompt_for(record)?;
        self.dropped.fetch_max(dropped, Ordering::SeqCst);
        let request = json!({
            "kind": "completion",
            "backend": self.llm.name(),
            "temperature": self.config.temperature,
            "prompt": prompt,
        });
        if let Some(cache) = &self.cache {
            if let Some(raw) = cache.get(&request)? {
                if let Ok(parsed) = parse_scores(&raw) {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(LlmScore::from_parsed(parsed, raw));
                }
            }
        }
        let mut last_err = None;
        for attempt in 0..=self.config.max_retries {
            self.llm_calls.fetch_add(1, Ordering::SeqCst);
            match self.llm.complete(&prompt, self.config.temperature) {
                Ok(raw) => match parse_scores(&raw) {
                    Ok(parsed) => {
                        if let Some(cache) = &self.cache {
                            cache.put(&request, &raw)?;
                        }
                        return Ok(LlmScore::from_parsed(parsed, raw));
                    }
                    Err(e) => last_err = Some(e),
                },
                Err(e) => last_err = Some(e),
            }
            log::warn!("{}: attempt {} failed", record.child_id, attempt + 1);
        }
        Err(with_child(last_err.expect("at least one attempt"), &record.child_id))
    }

    /// Scores records concurrently with at most `max_in_flight` calls at once.
    /// Output order matches input order.
    pub fn score_all(&self, records: &[&ChildRecord]) -> Result<Vec<LlmScore>> {
        self.pool()?
            .install(|| records.par_iter().map(|r| self.score(r)).collect())
    }
}

/// One-shot convenience over [`LlmScorer`].
pub fn score_with_llm(
    record: &ChildRecord,
    corpus: &Corpus,
    config: &BackendConfig,
    variant: TranscriptVariant,
) -> Result<LlmScore> {
    LlmScorer::new(corpus, variant, config)?.score(record)
}
