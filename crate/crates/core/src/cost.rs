//! Per-page pre-processing cost and per-call LLM cost accounting.
//!
//! Default rates:
//! - LlamaParse: $1.0 per 1000 credits, 30 credits per page with GPT-4o.
//! - Vertex AI (Gemini-2.0-flash, image modality): $0.0001935 per token.
//! - Anthropic (Claude 3 Opus): $15 per 1M tokens.
//! - Ours: layout analysis at $375 per 500,000 pages, GPT-4o text mode at
//!   $2.5 per 1M tokens, embeddings at $0.00006 per page.
//!
//! Per-call model rates are back-derived from observed per-call costs at 600
//! prompt tokens (rate = cost / 600): GPT-3.5 Turbo 0.0003, GPT-4 0.0360,
//! GPT-4o 0.0030. GPT-4o with image input is a flat 0.0765 per call.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOKENS_PER_PAGE: u32 = 600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("tokens_per_page must be at least 1")]
    ZeroTokensPerPage,
    #[error("negative or non-finite rate in {0}")]
    InvalidRate(String),
    #[error("bulk pricing for {0} covers zero pages or credits")]
    ZeroQuantity(String),
    #[error("no pricing for solution {0:?}")]
    UnknownSolution(String),
    #[error("no pricing for model {0:?}")]
    UnknownModel(String),
    #[error("candidate {0:?} costs nothing; ratio undefined")]
    ZeroCandidateCost(String),
    #[error("pricing file {path}: {message}")]
    Parse { path: String, message: String },
}

/// How one cost component scales with a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PageRate {
    /// Fixed amount per page.
    PerPage { label: String, usd: f64 },
    /// `usd` buys `pages` pages.
    Bulk { label: String, usd: f64, pages: f64 },
    /// `usd` buys `credits`; each page consumes `credits_per_page`.
    Credits {
        label: String,
        usd: f64,
        credits: f64,
        credits_per_page: f64,
    },
    /// Per-token rate times tokens per page.
    PerToken { label: String, usd_per_token: f64 },
    /// Per-million-token rate times tokens per page.
    PerMillionTokens { label: String, usd_per_million: f64 },
}

impl PageRate {
    pub fn label(&self) -> &str {
        match self {
            PageRate::PerPage { label, .. }
            | PageRate::Bulk { label, .. }
            | PageRate::Credits { label, .. }
            | PageRate::PerToken { label, .. }
            | PageRate::PerMillionTokens { label, .. } => label,
        }
    }

    fn amounts(&self) -> Vec<f64> {
        match self {
            PageRate::PerPage { usd, .. } => vec![*usd],
            PageRate::Bulk { usd, pages, .. } => vec![*usd, *pages],
            PageRate::Credits {
                usd,
                credits,
                credits_per_page,
                ..
            } => vec![*usd, *credits, *credits_per_page],
            PageRate::PerToken { usd_per_token, .. } => vec![*usd_per_token],
            PageRate::PerMillionTokens { usd_per_million, .. } => vec![*usd_per_million],
        }
    }

    pub fn cost_per_page(&self, tokens_per_page: u32) -> f64 {
        let tokens = f64::from(tokens_per_page);
        match self {
            PageRate::PerPage { usd, .. } => *usd,
            PageRate::Bulk { usd, pages, .. } => usd / pages,
            PageRate::Credits {
                usd,
                credits,
                credits_per_page,
                ..
            } => (usd / credits) * credits_per_page,
            PageRate::PerToken { usd_per_token, .. } => usd_per_token * tokens,
            PageRate::PerMillionTokens { usd_per_million, .. } => usd_per_million / 1e6 * tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionPricing {
    pub display_name: String,
    pub main_model: String,
    pub components: Vec<PageRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelRate {
    PerMillionTokens { usd_per_million: f64 },
    FlatPerCall { usd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    #[serde(default = "default_tokens_per_page")]
    pub tokens_per_page: u32,
    #[serde(default)]
    pub solutions: BTreeMap<String, SolutionPricing>,
    #[serde(default)]
    pub models: BTreeMap<String, ModelRate>,
}

fn default_tokens_per_page() -> u32 {
    DEFAULT_TOKENS_PER_PAGE
}

/// Solution ids in report order.
pub const SOLUTION_ORDER: [&str; 4] = ["llamaparse", "vertex", "anthropic", "ours"];
/// Model ids in report order.
pub const MODEL_ORDER: [&str; 4] = ["gpt-3.5-turbo", "gpt-4", "gpt-4o", "gpt-4o-image"];

impl Default for PricingConfig {
    fn default() -> Self {
        let solution = |display: &str, model: &str, components: Vec<PageRate>| SolutionPricing {
            display_name: display.into(),
            main_model: model.into(),
            components,
        };
        let solutions = BTreeMap::from([
            (
                "llamaparse".to_string(),
                solution(
                    "LlamaParse",
                    "GPT-4o",
                    vec![PageRate::Credits {
                        label: "parsing credits".into(),
                        usd: 1.0,
                        credits: 1000.0,
                        credits_per_page: 30.0,
                    }],
                ),
            ),
            (
                "vertex".to_string(),
                solution(
                    "Vertex AI",
                    "Gemini-2.0-flash",
                    vec![PageRate::PerToken {
                        label: "image tokens".into(),
                        usd_per_token: 0.0001935,
                    }],
                ),
            ),
            (
                "anthropic".to_string(),
                solution(
                    "Anthropic",
                    "Claude 3 Opus",
                    vec![PageRate::PerMillionTokens {
                        label: "input tokens".into(),
                        usd_per_million: 15.0,
                    }],
                ),
            ),
            (
                "ours".to_string(),
                solution(
                    "Our solution",
                    "GPT-4o",
                    vec![
                        PageRate::Bulk {
                            label: "layout analysis".into(),
                            usd: 375.0,
                            pages: 500_000.0,
                        },
                        PageRate::PerMillionTokens {
                            label: "chart-to-table LLM".into(),
                            usd_per_million: 2.5,
                        },
                        PageRate::PerPage {
                            label: "embeddings".into(),
                            usd: 0.00006,
                        },
                    ],
                ),
            ),
        ]);
        let per_call = |cost_at_600: f64| ModelRate::PerMillionTokens {
            usd_per_million: cost_at_600 / 600.0 * 1e6,
        };
        let models = BTreeMap::from([
            ("gpt-3.5-turbo".to_string(), per_call(0.0003)),
            ("gpt-4".to_string(), per_call(0.0360)),
            ("gpt-4o".to_string(), per_call(0.0030)),
            ("gpt-4o-image".to_string(), ModelRate::FlatPerCall { usd: 0.0765 }),
        ]);
        Self {
            tokens_per_page: DEFAULT_TOKENS_PER_PAGE,
            solutions,
            models,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComponent {
    pub label: String,
    pub usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCost {
    pub solution_name: String,
    pub display_name: String,
    pub main_model: String,
    pub cost_per_page_usd: f64,
    pub components: Vec<CostComponent>,
}

fn check_rate(name: &str, value: f64) -> Result<(), CostError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(CostError::InvalidRate(name.to_string()))
    }
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.tokens_per_page == 0 {
            return Err(CostError::ZeroTokensPerPage);
        }
        for (name, solution) in &self.solutions {
            for rate in &solution.components {
                let context = format!("{name}/{}", rate.label());
                for amount in rate.amounts() {
                    check_rate(&context, amount)?;
                }
                let zero_quantity = match rate {
                    PageRate::Bulk { pages, .. } => *pages == 0.0,
                    PageRate::Credits { credits, .. } => *credits == 0.0,
                    _ => false,
                };
                if zero_quantity {
                    return Err(CostError::ZeroQuantity(context));
                }
            }
        }
        for (name, rate) in &self.models {
            let value = match rate {
                ModelRate::PerMillionTokens { usd_per_million } => *usd_per_million,
                ModelRate::FlatPerCall { usd } => *usd,
            };
            check_rate(name, value)?;
        }
        Ok(())
    }

    pub fn with_tokens_per_page(mut self, tokens_per_page: u32) -> Result<Self, CostError> {
        self.tokens_per_page = tokens_per_page;
        self.validate()?;
        Ok(self)
    }

    /// Parses JSON, or TOML when the text is not a JSON object.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CostError> {
        let parse_err = |message: String| CostError::Parse {
            path: origin.to_string(),
            message,
        };
        let config: PricingConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| parse_err(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    /// Loads a pricing file. Entries it defines replace the defaults of the
    /// same name; other defaults are kept.
    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let overrides = Self::parse(&text, &path.display().to_string())?;
        let mut merged = Self::default();
        merged.tokens_per_page = overrides.tokens_per_page;
        merged.solutions.extend(overrides.solutions);
        merged.models.extend(overrides.models);
        merged.validate()?;
        Ok(merged)
    }
}

pub fn cost_per_page(solution: &str, pricing: &PricingConfig) -> Result<SolutionCost, CostError> {
    pricing.validate()?;
    let preset = pricing
        .solutions
        .get(solution)
        .ok_or_else(|| CostError::UnknownSolution(solution.to_string()))?;
    let components: Vec<CostComponent> = preset
        .components
        .iter()
        .map(|rate| CostComponent {
            label: rate.label().to_string(),
            usd: rate.cost_per_page(pricing.tokens_per_page),
        })
        .collect();
    Ok(SolutionCost {
        solution_name: solution.to_string(),
        display_name: preset.display_name.clone(),
        main_model: preset.main_model.clone(),
        cost_per_page_usd: components.iter().map(|c| c.usd).sum(),
        components,
    })
}

pub fn cost_per_call(model_tag: &str, input_tokens: u64, pricing: &PricingConfig) -> Result<f64, CostError> {
    match pricing.models.get(model_tag) {
        Some(ModelRate::PerMillionTokens { usd_per_million }) => Ok(input_tokens as f64 * usd_per_million / 1e6),
        Some(ModelRate::FlatPerCall { usd }) => Ok(*usd),
        None => Err(CostError::UnknownModel(model_tag.to_string())),
    }
}

/// Cost of one call for a model, or the per-page cost of a solution.
fn priced(name: &str, pricing: &PricingConfig) -> Result<f64, CostError> {
    if pricing.models.contains_key(name) {
        cost_per_call(name, u64::from(pricing.tokens_per_page), pricing)
    } else if pricing.solutions.contains_key(name) {
        Ok(cost_per_page(name, pricing)?.cost_per_page_usd)
    } else {
        Err(CostError::UnknownModel(name.to_string()))
    }
}

/// `baseline / candidate`, each priced at one page of tokens.
pub fn savings_ratio(baseline: &str, candidate: &str, pricing: &PricingConfig) -> Result<f64, CostError> {
    let base = priced(baseline, pricing)?;
    let cand = priced(candidate, pricing)?;
    if cand == 0.0 {
        return Err(CostError::ZeroCandidateCost(candidate.to_string()));
    }
    Ok(base / cand)
}

/// Per-page comparison rows followed by per-call rows.
pub fn cost_report(pricing: &PricingConfig) -> Result<String, CostError> {
    pricing.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "# cost per page ({} tokens per page)", pricing.tokens_per_page);
    let _ = writeln!(out, "{:<12} {:<9} {:<18} {}", "solution", "usd", "main model", "name");
    let mut solutions: Vec<&str> = SOLUTION_ORDER
        .iter()
        .copied()
        .filter(|s| pricing.solutions.contains_key(*s))
        .collect();
    solutions.extend(
        pricing
            .solutions
            .keys()
            .map(String::as_str)
            .filter(|s| !SOLUTION_ORDER.contains(s)),
    );
    for name in solutions {
        let cost = cost_per_page(name, pricing)?;
        let _ = writeln!(
            out,
            "{:<12} {:<9.5} {:<18} {}",
            name, cost.cost_per_page_usd, cost.main_model, cost.display_name
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "# cost per call ({} input tokens)", pricing.tokens_per_page);
    let _ = writeln!(out, "{:<14} {}", "model", "usd");
    let mut models: Vec<&str> = MODEL_ORDER
        .iter()
        .copied()
        .filter(|m| pricing.models.contains_key(*m))
        .collect();
    models.extend(
        pricing
            .models
            .keys()
            .map(String::as_str)
            .filter(|m| !MODEL_ORDER.contains(m)),
    );
    for model in models {
        let usd = cost_per_call(model, u64::from(pricing.tokens_per_page), pricing)?;
        let _ = writeln!(out, "{model:<14} {usd:.4}");
    }
    Ok(out)
}
