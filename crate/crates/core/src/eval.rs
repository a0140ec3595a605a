//! Question-answering evaluation: dataset loading, automatic scoring and
//! end-to-end runs over an index.
//!
//! Scoring is a deterministic proxy for human judgement. Both answers are
//! lowercased, stripped of currency symbols, commas and percent signs, and
//! whitespace-collapsed. Two numbers match within relative tolerance 1e-3;
//! otherwise the gold text must occur in the prediction on token boundaries.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{cost_per_call, CostError, PricingConfig};
use crate::embed::Embedder;
use crate::generation::{answer_question, GenerationError, LlmProvider};
use crate::index::{FilterField, MetadataFilter, RetrievalConfig, VectorIndex, DEFAULT_K};

pub const DEFAULT_WORKERS: usize = 4;
pub const NUMERIC_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Low,
    Medium,
    High,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Low => "low",
            Difficulty::Medium => "medium",
            Difficulty::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Table,
    Chart,
    Text,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Table => "table",
            Target::Chart => "chart",
            Target::Text => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAExample {
    pub question: String,
    pub gold_answer: String,
    pub difficulty: Difficulty,
    pub reference_count: u32,
    pub target: Target,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub filters: BTreeMap<String, String>,
    pub document_id: String,
}

impl QAExample {
    /// Metadata filters for retrieval: the example's own filters plus its
    /// document id.
    pub fn retrieval_filters(&self) -> Result<Vec<MetadataFilter>, EvalError> {
        let mut filters = vec![MetadataFilter::new(FilterField::DocumentId, self.document_id.clone())];
        for (field, value) in &self.filters {
            let field: FilterField = field
                .parse()
                .map_err(|_| EvalError::InvalidExample {
                    line: 0,
                    message: format!("unknown filter field {field:?}"),
                })?;
            if field != FilterField::DocumentId || value != &self.document_id {
                filters.push(MetadataFilter::new(field, value.clone()));
            }
        }
        Ok(filters)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("dataset line {line}: {message}")]
    InvalidExample { line: usize, message: String },
    #[error("documents not in the index: {}", .0.join(", "))]
    MissingDocuments(Vec<String>),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

pub fn parse_dataset(text: &str) -> Result<Vec<QAExample>, EvalError> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| EvalError::InvalidExample { line: i + 1, message };
        let example: QAExample = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        if example.reference_count == 0 {
            return Err(invalid("reference_count must be at least 1".into()));
        }
        if example.question.trim().is_empty() {
            return Err(invalid("question is empty".into()));
        }
        example.retrieval_filters().map_err(|e| match e {
            EvalError::InvalidExample { message, .. } => invalid(message),
            other => other,
        })?;
        examples.push(example);
    }
    Ok(examples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QAExample>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text)
}

/// Lowercase, drop `$ € £ ¥ , %`, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .filter(|c| !matches!(c, '$' | '€' | '£' | '¥' | ',' | '%'))
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn as_number(text: &str) -> Option<f64> {
    let value: f64 = text.parse().ok()?;
    value.is_finite().then_some(value)
}

fn bounded_find(haystack: &str, needle: &str) -> bool {
    let is_word = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    haystack.match_indices(needle).any(|(at, _)| {
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + needle.len()..].chars().next();
        !is_word(before) && !is_word(after)
    })
}

pub fn score_answer(predicted: &str, gold: &str) -> bool {
    let p = normalize_answer(predicted);
    let g = normalize_answer(gold);
    if g.is_empty() {
        return p.is_empty();
    }
    if let (Some(pv), Some(gv)) = (as_number(&p), as_number(&g)) {
        return (pv - gv).abs() <= NUMERIC_TOLERANCE * gv.abs();
    }
    bounded_find(&p, &g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub workers: usize,
    pub k: usize,
    /// Model whose per-call rate prices each question; defaults to the
    /// provider's model tag.
    pub cost_model: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            workers: DEFAULT_WORKERS,
            k: DEFAULT_K,
            cost_model: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Breakdown {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
        self.accuracy = self.correct as f64 / self.total as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub index: usize,
    pub question: String,
    pub gold_answer: String,
    pub predicted: String,
    pub correct: bool,
    pub target: Target,
    pub difficulty: Difficulty,
    pub retrieved: Vec<String>,
    pub prompt_token_count: u64,
    pub cost_usd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub by_target: BTreeMap<String, Breakdown>,
    pub by_difficulty: BTreeMap<String, Breakdown>,
    pub total_cost_usd: f64,
    pub model_tag: String,
    pub cost_model: String,
    pub failures: usize,
    pub results: Vec<ExampleResult>,
}

impl EvalReport {
    fn from_results(results: Vec<ExampleResult>, model_tag: String, cost_model: String) -> Self {
        let mut by_target = BTreeMap::new();
        let mut by_difficulty = BTreeMap::new();
        for r in &results {
            by_target
                .entry(r.target.as_str().to_string())
                .or_insert_with(Breakdown::default)
                .add(r.correct);
            by_difficulty
                .entry(r.difficulty.as_str().to_string())
                .or_insert_with(Breakdown::default)
                .add(r.correct);
        }
        let total = results.len();
        let correct = results.iter().filter(|r| r.correct).count();
        Self {
            total,
            correct,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            by_target,
            by_difficulty,
            total_cost_usd: results.iter().map(|r| r.cost_usd).sum(),
            model_tag,
            cost_model,
            failures: results.iter().filter(|r| r.error.is_some()).count(),
            results,
        }
    }
}

/// Answers and scores every example. Documents missing from the index are
/// reported before any provider call; a failed provider call marks that
/// example wrong and records the error.
pub fn run_eval(
    examples: &[QAExample],
    index: &VectorIndex,
    embedder: &dyn Embedder,
    llm: &dyn LlmProvider,
    pricing: &PricingConfig,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let missing: Vec<String> = examples
        .iter()
        .map(|e| e.document_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|d| !index.contains_document(d))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingDocuments(missing));
    }
    let cost_model = options.cost_model.clone().unwrap_or_else(|| llm.model_tag());
    cost_per_call(&cost_model, 0, pricing)?;
    let configs = examples
        .iter()
        .map(|e| {
            let filters = e.retrieval_filters()?;
            RetrievalConfig::new(options.k, filters).map_err(|e| EvalError::InvalidExample {
                line: 0,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let run_one = |i: usize| -> Result<ExampleResult, EvalError> {
        let example = &examples[i];
        let base = ExampleResult {
            index: i,
            question: example.question.clone(),
            gold_answer: example.gold_answer.clone(),
            predicted: String::new(),
            correct: false,
            target: example.target,
            difficulty: example.difficulty,
            retrieved: Vec::new(),
            prompt_token_count: 0,
            cost_usd: 0.0,
            error: None,
        };
        match answer_question(&example.question, index, embedder, &configs[i], llm) {
            Ok(answer) => Ok(ExampleResult {
                correct: score_answer(&answer.text, &example.gold_answer),
                cost_usd: cost_per_call(&cost_model, answer.prompt_token_count, pricing)?,
                retrieved: answer.retrieved.into_iter().map(|r| r.chunk_id).collect(),
                prompt_token_count: answer.prompt_token_count,
                predicted: answer.text,
                ..base
            }),
            Err(GenerationError::Provider { source, .. }) => Ok(ExampleResult {
                error: Some(source.to_string()),
                ..base
            }),
            Err(other) => Err(other.into()),
        }
    };

    let workers = options
        .workers
        .min(llm.max_concurrency())
        .clamp(1, examples.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<ExampleResult, EvalError>>> = (0..examples.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= examples.len() {
                            break;
                        }
                        done.push((i, run_one(i)));
                    }
                    done
                })
            })
            .collect();
        for handle in handles {
            for (i, result) in handle.join().expect("eval worker panicked") {
                slots[i] = Some(result);
            }
        }
    });
    let results = slots
        .into_iter()
        .map(|s| s.expect("every example evaluated"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_results(results, llm.model_tag(), cost_model))
}
