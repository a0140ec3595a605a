//! Token segmentation used for chunk sizing and prompt accounting.

use std::ops::Range;

/// Splits text into tokens given as byte ranges.
///
/// Implementations must return ordered, non-overlapping spans. The chunker
/// cuts text only at span starts, so a tokenizer whose spans are stable
/// under such cuts gives exact chunk sizes.
pub trait Tokenizer: Send + Sync {
    /// Short identifier stored alongside persisted indexes.
    fn tag(&self) -> &str;

    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count_tokens(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Word,
    Punct,
}

fn classify(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() {
        CharClass::Word
    } else {
        CharClass::Punct
    }
}

/// Splits on Unicode whitespace; within a word, each maximal run of
/// alphanumerics and each maximal run of other symbols is one token, so
/// `"Q1/23E Core"` is `Q1`, `/`, `23E`, `Core`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DefaultTokenizer;

impl DefaultTokenizer {
    pub const TAG: &'static str = "ws-punct-v1";
}

impl Tokenizer for DefaultTokenizer {
    fn tag(&self) -> &str {
        Self::TAG
    }

    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut current: Option<(usize, CharClass)> = None;
        for (i, c) in text.char_indices() {
            let class = classify(c);
            match current {
                Some((_, prev)) if prev == class => {}
                Some((start, _)) => {
                    spans.push(start..i);
                    current = (class != CharClass::Space).then_some((i, class));
                }
                None if class != CharClass::Space => current = Some((i, class)),
                None => {}
            }
            if class == CharClass::Space {
                current = None;
            }
        }
        if let Some((start, _)) = current {
            spans.push(start..text.len());
        }
        spans
    }
}

pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> usize {
    tokenizer.count_tokens(text)
}

/// Lowercased word and symbol tokens.
pub fn tokens_lowercase(text: &str, tokenizer: &dyn Tokenizer) -> Vec<String> {
    tokenizer
        .token_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}
