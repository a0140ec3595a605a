//! Prompt assembly and LLM provider adapters.
//!
//! The prompt is a fixed template around the retrieved chunk texts, with the
//! question appended after it:
//!
//! ```text
//! Comprehend the following context and answer the questions in one line:
//!
//! {chunks joined by blank lines}
//!
//! Do not add extra information on your own.
//!
//! Question: {question}
//! Answer:
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embed::{embed, EmbedError, Embedder};
use crate::index::{IndexError, RetrievalConfig, VectorIndex};
use crate::provider::{HttpEndpoint, ProviderError, ENV_LLM_ENDPOINT, ENV_LLM_KEY};
use crate::tokenize::{DefaultTokenizer, Tokenizer};

pub const PREAMBLE: &str = "Comprehend the following context and answer the questions in one line:";
pub const POSTAMBLE: &str = "Do not add extra information on your own.";
pub const QUESTION_PREFIX: &str = "\n\nQuestion: ";
pub const ANSWER_SUFFIX: &str = "\nAnswer:";
const CONTEXT_SEPARATOR: &str = "\n\n";
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 256;

/// Preamble, context slot, postamble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub postamble: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            preamble: PREAMBLE.into(),
            postamble: POSTAMBLE.into(),
        }
    }
}

impl PromptTemplate {
    pub fn render<S: AsRef<str>>(&self, context_chunks: &[S], question: &str) -> String {
        let context = context_chunks
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(CONTEXT_SEPARATOR);
        format!(
            "{}\n\n{context}\n\n{}{QUESTION_PREFIX}{question}{ANSWER_SUFFIX}",
            self.preamble, self.postamble
        )
    }

    /// Splits a rendered prompt back into (context, question).
    pub fn parse<'a>(&self, prompt: &'a str) -> Option<(&'a str, &'a str)> {
        let rest = prompt.strip_prefix(self.preamble.as_str())?.strip_prefix("\n\n")?;
        let tail = format!("\n\n{}{QUESTION_PREFIX}", self.postamble);
        let at = rest.rfind(&tail)?;
        let question = rest[at + tail.len()..].strip_suffix(ANSWER_SUFFIX)?;
        Some((&rest[..at], question))
    }
}

pub fn build_prompt<S: AsRef<str>>(context_chunks: &[S], question: &str) -> String {
    PromptTemplate::default().render(context_chunks, question)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: Usage,
}

pub trait LlmProvider: Send + Sync {
    fn model_tag(&self) -> String;

    /// Upper bound on simultaneous `complete` calls callers should issue.
    fn max_concurrency(&self) -> usize {
        4
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError>;
}

fn local_usage(prompt: &str, completion: &str) -> Usage {
    Usage {
        prompt_tokens: DefaultTokenizer.count_tokens(prompt) as u64,
        completion_tokens: DefaultTokenizer.count_tokens(completion) as u64,
    }
}

fn normalize_words(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token-bounded containment on normalized word strings.
fn contains_words(haystack: &str, needle: &str) -> bool {
    !needle.is_empty() && format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// Every JSON array of objects embedded in `context`, as (key, value) rows.
fn embedded_records(context: &str) -> Vec<Vec<(String, String)>> {
    let mut rows = Vec::new();
    let mut from = 0;
    while let Some(rel) = context[from..].find('[') {
        let at = from + rel;
        let mut stream = serde_json::Deserializer::from_str(&context[at..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Array(items))) => {
                for item in items {
                    if let Value::Object(map) = item {
                        let row = map
                            .into_iter()
                            .map(|(k, v)| {
                                let v = match v {
                                    Value::String(s) => s,
                                    other => other.to_string(),
                                };
                                (k, v)
                            })
                            .collect();
                        rows.push(row);
                    }
                }
                from = at + stream.byte_offset();
            }
            _ => from = at + 1,
        }
    }
    rows
}

/// Offline stand-in for an LLM that answers by looking the question up in
/// the context.
///
/// Table and chart rows serialized as JSON records are searched first: a
/// row matches when the question mentions one of its cell values (the row
/// label) and a column key; the best match is the one with the longest
/// matching key. Failing that, the context sentence sharing the most words
/// with the question is returned.
#[derive(Debug, Clone)]
pub struct LookupMockLlm {
    model_tag: String,
}

impl Default for LookupMockLlm {
    fn default() -> Self {
        Self::new("mock-lookup")
    }
}

impl LookupMockLlm {
    pub const NO_ANSWER: &'static str = "I don't know.";

    pub fn new(model_tag: impl Into<String>) -> Self {
        Self {
            model_tag: model_tag.into(),
        }
    }

    pub fn answer(context: &str, question: &str) -> String {
        Self::record_answer(context, question)
            .or_else(|| Self::sentence_answer(context, question))
            .unwrap_or_else(|| Self::NO_ANSWER.to_string())
    }

    fn record_answer(context: &str, question: &str) -> Option<String> {
        let q = normalize_words(question);
        let mut best: Option<((usize, usize), String)> = None;
        for row in embedded_records(context) {
            let label_len = row
                .iter()
                .map(|(_, v)| normalize_words(v))
                .filter(|v| v.chars().any(|c| c.is_alphabetic()) && contains_words(&q, v))
                .map(|v| v.len())
                .max();
            let Some(label_len) = label_len else { continue };
            for (key, value) in &row {
                let k = normalize_words(key);
                if !contains_words(&q, &k) || contains_words(&q, &normalize_words(value)) {
                    continue;
                }
                let rank = (k.len(), label_len);
                if best.as_ref().is_none_or(|(r, _)| rank > *r) {
                    best = Some((rank, value.clone()));
                }
            }
        }
        best.map(|(_, v)| v)
    }

    fn sentence_answer(context: &str, question: &str) -> Option<String> {
        let q_words: Vec<String> = normalize_words(question)
            .split(' ')
            .filter(|w| w.len() > 2)
            .map(str::to_string)
            .collect();
        let mut best: Option<(usize, &str)> = None;
        let sentences = context
            .lines()
            .flat_map(|line| line.split(". "))
            .map(|s| s.trim().trim_end_matches('.'))
            .filter(|s| !s.is_empty());
        for sentence in sentences {
            let words = normalize_words(sentence);
            let overlap = q_words.iter().filter(|w| contains_words(&words, w)).count();
            if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, sentence));
            }
        }
        best.map(|(_, s)| s.to_string())
    }
}

impl LlmProvider for LookupMockLlm {
    fn model_tag(&self) -> String {
        self.model_tag.clone()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let (context, question) = PromptTemplate::default()
            .parse(&request.prompt)
            .ok_or_else(|| ProviderError::Permanent("prompt does not follow the template".into()))?;
        let text = Self::answer(context, question);
        Ok(CompletionResponse {
            usage: local_usage(&request.prompt, &text),
            text,
        })
    }
}

/// Replays canned answers keyed by question text.
#[derive(Debug, Clone, Default)]
pub struct FixtureMockLlm {
    answers: BTreeMap<String, String>,
}

impl FixtureMockLlm {
    pub fn new(answers: BTreeMap<String, String>) -> Self {
        Self { answers }
    }

    /// Reads a JSON object mapping question to answer.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Permanent(format!("{}: {e}", path.display())))?;
        let answers = serde_json::from_str(&text)
            .map_err(|e| ProviderError::InvalidResponse(format!("{}: {e}", path.display())))?;
        Ok(Self::new(answers))
    }
}

impl LlmProvider for FixtureMockLlm {
    fn model_tag(&self) -> String {
        "mock-fixture".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let question = PromptTemplate::default()
            .parse(&request.prompt)
            .map(|(_, q)| q)
            .unwrap_or(&request.prompt);
        let text = self
            .answers
            .get(question)
            .cloned()
            .ok_or_else(|| ProviderError::Permanent(format!("no fixture answer for {question:?}")))?;
        Ok(CompletionResponse {
            usage: local_usage(&request.prompt, &text),
            text,
        })
    }
}

/// Chat-completions style endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    endpoint: HttpEndpoint,
    model: String,
    max_concurrency: usize,
}

impl HttpLlm {
    pub fn new(endpoint: HttpEndpoint, model: impl Into<String>) -> Self {
        Self {
            endpoint,
            model: model.into(),
            max_concurrency: 4,
        }
    }

    pub fn from_env(model: impl Into<String>) -> Result<Self, ProviderError> {
        Ok(Self::new(HttpEndpoint::from_env(ENV_LLM_ENDPOINT, ENV_LLM_KEY)?, model))
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n.max(1);
        self
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl LlmProvider for HttpLlm {
    fn model_tag(&self) -> String {
        self.model.clone()
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let body = serde_json::json!({
            "model": request.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "max_tokens": request.max_output_tokens,
            "temperature": 0,
        });
        let (_, reply) = self.endpoint.post_json(&body)?;
        let parsed: ChatResponse = serde_json::from_str(&reply)
            .map_err(|e| ProviderError::InvalidResponse(format!("chat response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::InvalidResponse("chat response has no content".into()))?;
        let usage = match parsed.usage {
            Some(u) => Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            },
            None => local_usage(&request.prompt, &text),
        };
        Ok(CompletionResponse { text, usage })
    }
}

/// Retries transient failures with exponential backoff.
#[derive(Debug, Clone)]
pub struct RetryingLlm<P> {
    inner: P,
    attempts: u32,
    base_delay: Duration,
}

impl<P: LlmProvider> RetryingLlm<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }

    pub fn with_policy(mut self, attempts: u32, base_delay: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.base_delay = base_delay;
        self
    }
}

impl<P: LlmProvider> LlmProvider for RetryingLlm<P> {
    fn model_tag(&self) -> String {
        self.inner.model_tag()
    }

    fn max_concurrency(&self) -> usize {
        self.inner.max_concurrency()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_transient() && attempt + 1 < self.attempts => {
                    let delay = self.base_delay * 2u32.pow(attempt);
                    log::warn!("LLM call failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterReading {
    pub calls: u64,
    pub failures: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Counts calls and provider-reported token usage.
#[derive(Debug, Default)]
pub struct MeteredLlm<P> {
    inner: P,
    calls: AtomicU64,
    failures: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl<P: LlmProvider> MeteredLlm<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
            failures: AtomicU64::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        }
    }

    pub fn reading(&self) -> MeterReading {
        MeterReading {
            calls: self.calls.load(Ordering::SeqCst),
            failures: self.failures.load(Ordering::SeqCst),
            prompt_tokens: self.prompt_tokens.load(Ordering::SeqCst),
            completion_tokens: self.completion_tokens.load(Ordering::SeqCst),
        }
    }
}

impl<P: LlmProvider> LlmProvider for MeteredLlm<P> {
    fn model_tag(&self) -> String {
        self.inner.model_tag()
    }

    fn max_concurrency(&self) -> usize {
        self.inner.max_concurrency()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let result = self.inner.complete(request);
        match &result {
            Ok(r) => {
                self.prompt_tokens.fetch_add(r.usage.prompt_tokens, Ordering::SeqCst);
                self.completion_tokens.fetch_add(r.usage.completion_tokens, Ordering::SeqCst);
            }
            Err(_) => {
                self.failures.fetch_add(1, Ordering::SeqCst);
            }
        }
        result
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for Box<P> {
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }

    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRef {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub model_tag: String,
    /// Prompt length under the default tokenizer.
    pub prompt_token_count: u64,
    pub completion_token_count: u64,
    pub retrieved: Vec<RetrievedRef>,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    /// The prompt is kept so the call can be replayed.
    #[error("LLM call failed: {source}")]
    Provider { source: ProviderError, prompt: String },
}

/// Builds the prompt from the given context and calls the provider once.
pub fn answer_with_context<S: AsRef<str>>(
    question: &str,
    context_chunks: &[S],
    llm: &dyn LlmProvider,
) -> Result<Answer, GenerationError> {
    if question.trim().is_empty() {
        return Err(GenerationError::EmptyQuestion);
    }
    let prompt = build_prompt(context_chunks, question);
    let request = CompletionRequest {
        model: llm.model_tag(),
        prompt,
        max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
    };
    let response = match llm.complete(&request) {
        Ok(r) => r,
        Err(source) => {
            return Err(GenerationError::Provider {
                source,
                prompt: request.prompt,
            })
        }
    };
    let mut warnings = Vec::new();
    if context_chunks.is_empty() {
        warnings.push("no chunks retrieved; answered with empty context".to_string());
    }
    Ok(Answer {
        text: response.text.trim().to_string(),
        model_tag: request.model,
        prompt_token_count: DefaultTokenizer.count_tokens(&request.prompt) as u64,
        completion_token_count: response.usage.completion_tokens,
        retrieved: Vec::new(),
        prompt: request.prompt,
        warnings,
    })
}

/// Embeds the question, retrieves top-k chunks and asks the provider.
pub fn answer_question(
    question: &str,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    retrieval: &RetrievalConfig,
    llm: &dyn LlmProvider,
) -> Result<Answer, GenerationError> {
    if question.trim().is_empty() {
        return Err(GenerationError::EmptyQuestion);
    }
    let query = embed(question, embedder)?;
    let hits = index.search(&query, retrieval)?;
    let texts: Vec<&str> = hits.iter().map(|h| h.chunk.text.as_str()).collect();
    let mut answer = answer_with_context(question, &texts, llm)?;
    answer.retrieved = hits
        .iter()
        .map(|h| RetrievedRef {
            chunk_id: h.chunk.chunk_id.clone(),
            score: h.score,
        })
        .collect();
    if hits.is_empty() {
        log::warn!("no chunks matched {question:?} under the given filters");
    }
    Ok(answer)
}
