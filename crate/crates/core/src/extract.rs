//! Think-block splitting and option-answer extraction from raw completions.
//!
//! Reasoning backends wrap their chain of thought in `<think> </think>` tags
//! ahead of the final answer. Extraction first looks for the answer after the
//! think block, then falls back to scanning the whole completion.

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// A completion split into its reasoning block and the text after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCompletion {
    /// Trimmed contents of a leading `<think>…</think>` block, if closed.
    pub reasoning: Option<String>,
    /// Everything after the think block (the whole text when there is none,
    /// or when the block is unclosed).
    pub after_think: String,
}

impl SplitCompletion {
    /// True when a think block is present and nonempty after trimming.
    pub fn has_reasoning(&self) -> bool {
        self.reasoning.as_deref().is_some_and(|r| !r.is_empty())
    }
}

/// Split a completion into a leading think block and the remainder.
pub fn split_think(raw: &str) -> SplitCompletion {
    let trimmed = raw.trim_start();
    if let Some(body) = trimmed.strip_prefix(THINK_OPEN) {
        if let Some(end) = body.find(THINK_CLOSE) {
            return SplitCompletion {
                reasoning: Some(body[..end].trim().to_string()),
                after_think: body[end + THINK_CLOSE.len()..].to_string(),
            };
        }
    }
    SplitCompletion {
        reasoning: None,
        after_think: raw.to_string(),
    }
}

/// Extract the chosen option index from a completion with `k` options.
///
/// Strips a leading think block and returns the last integer in 1..=k found
/// after it; if the remainder holds none, the whole text (think block
/// included) is scanned as a fallback. `None` means the completion committed
/// to no valid option.
pub fn extract_answer(raw: &str, k: u32) -> Option<u32> {
    let split = split_think(raw);
    last_in_range(&split.after_think, k).or_else(|| {
        if split.reasoning.is_some() {
            last_in_range(raw, k)
        } else {
            None
        }
    })
}

/// Last whole integer in 1..=k appearing in `text`. Digit runs are taken as
/// single numbers, so "1024" never yields 1, 0, 2, or 4.
fn last_in_range(text: &str, k: u32) -> Option<u32> {
    let mut found = None;
    let mut digits = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() {
            digits.push(c);
        } else if !digits.is_empty() {
            if let Ok(n) = digits.parse::<u32>() {
                if (1..=k).contains(&n) {
                    found = Some(n);
                }
            }
            digits.clear();
        }
    }
    found
}
