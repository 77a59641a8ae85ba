//! Byte-deterministic prompt rendering from versioned templates.
//!
//! Every prompt in the pipeline is rendered here: the survey persona system
//! prompt, the three evaluation instructions (standard, in-context cases,
//! cultural norms), the three mining prompts plus their aggregation and
//! strict-reparse variants, and the distillation prompt. Template bodies live
//! as text files under `templates/`; any wording change requires a version
//! bump there, and golden-file tests pin the rendered bytes.
//!
//! The persona template keeps the literal "a/an {country}" wording rather
//! than resolving the article. Options render as "index. label" pairs,
//! space-separated on one line.

use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Question};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template}: placeholder {{{placeholder}}} is unbound or empty")]
    Unbound {
        template: &'static str,
        placeholder: String,
    },
    #[error("{what} must not be empty")]
    EmptyInput { what: &'static str },
}

/// A versioned template with named `{placeholder}` slots.
#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub version: &'static str,
    raw: &'static str,
}

impl PromptTemplate {
    /// Template body with the file's trailing newline removed.
    pub fn body(&self) -> &'static str {
        self.raw.strip_suffix('\n').unwrap_or(self.raw)
    }

    /// Substitute every `{name}` slot; unbound or empty bindings fail.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let body = self.body();
        let mut out = String::with_capacity(body.len());
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_placeholder_name(&after[..close]) => {
                    let name = &after[..close];
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .filter(|v| !v.is_empty())
                        .ok_or_else(|| PromptError::Unbound {
                            template: self.id,
                            placeholder: name.to_string(),
                        })?;
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

macro_rules! template {
    ($name:ident, $id:literal, $version:literal, $file:literal) => {
        pub const $name: PromptTemplate = PromptTemplate {
            id: $id,
            version: $version,
            raw: include_str!($file),
        };
    };
}

template!(SYSTEM, "system", "v1", "../templates/system_v1.txt");
template!(EVAL_STANDARD, "eval_standard", "v1", "../templates/eval_standard_v1.txt");
template!(EVAL_ICL, "eval_icl", "v1", "../templates/eval_icl_v1.txt");
template!(EVAL_NORMS, "eval_norms", "v1", "../templates/eval_norms_v1.txt");
template!(EVAL_NORMS_LOW, "eval_norms_low", "v1", "../templates/eval_norms_low_v1.txt");
template!(DISTILL_NORM, "distill_norm", "v1", "../templates/distill_norm_v1.txt");
template!(MINE_SYSTEM, "mine_system", "v1", "../templates/mine_system_v1.txt");
template!(MINE_TOPIC_ONLY, "mine_topic_only", "v1", "../templates/mine_topic_only_v1.txt");
template!(MINE_LOW_LEVEL, "mine_low_level", "v1", "../templates/mine_low_level_v1.txt");
template!(MINE_AGGREGATE, "mine_aggregate", "v1", "../templates/mine_aggregate_v1.txt");
template!(MINE_STRICT_SUFFIX, "mine_strict_suffix", "v1", "../templates/mine_strict_suffix_v1.txt");

const ALL_TEMPLATES: [&PromptTemplate; 11] = [
    &SYSTEM,
    &EVAL_STANDARD,
    &EVAL_ICL,
    &EVAL_NORMS,
    &EVAL_NORMS_LOW,
    &DISTILL_NORM,
    &MINE_SYSTEM,
    &MINE_TOPIC_ONLY,
    &MINE_LOW_LEVEL,
    &MINE_AGGREGATE,
    &MINE_STRICT_SUFFIX,
];

/// Template id to version, for run manifests and config fingerprints.
pub fn template_versions() -> BTreeMap<&'static str, &'static str> {
    ALL_TEMPLATES.iter().map(|t| (t.id, t.version)).collect()
}

/// Options as "1. label 2. label …" on one line.
pub fn format_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, label)| format!("{}. {}", i + 1, label))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Texts as an inline numbered list "1. a 2. b …".
pub fn format_numbered(texts: &[String]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Persona system prompt for answering as a member of `country`.
pub fn render_system(country: &str) -> Result<String, PromptError> {
    SYSTEM.render(&[("country", country)])
}

/// Standard evaluation instruction for one question.
pub fn render_standard(question: &Question) -> Result<String, PromptError> {
    EVAL_STANDARD.render(&[
        ("question", &question.text),
        ("options", &format_options(&question.options)),
    ])
}

/// A worked example inserted into the in-context-learning instruction.
#[derive(Debug, Clone, Serialize)]
pub struct IclCase {
    pub question: String,
    pub options: Vec<String>,
    /// Ground-truth option index, 1-based.
    pub answer: u32,
}

impl IclCase {
    /// Build a case from a corpus question and its majority answer.
    pub fn from_corpus(corpus: &Corpus, question_id: &str, country: &str) -> Result<Self, CorpusError> {
        let q = corpus.question(question_id)?;
        let answer = crate::corpus::ground_truth(corpus, question_id, country)?;
        Ok(IclCase {
            question: q.text.clone(),
            options: q.options.clone(),
            answer,
        })
    }
}

fn format_cases(cases: &[IclCase]) -> String {
    cases
        .iter()
        .map(|c| {
            format!(
                "#Question: {} #Options: {} #Answer: {}",
                c.question,
                format_options(&c.options),
                c.answer
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// In-context-learning instruction: worked cases ahead of the target question.
pub fn render_icl(question: &Question, cases: &[IclCase]) -> Result<String, PromptError> {
    if cases.is_empty() {
        return Err(PromptError::EmptyInput { what: "cases" });
    }
    EVAL_ICL.render(&[
        ("cases", &format_cases(cases)),
        ("question", &question.text),
        ("options", &format_options(&question.options)),
    ])
}

/// Cultural-norms instruction. The high-level line is omitted cleanly when
/// no high-level norm exists (topic-only mining produces none).
pub fn render_with_norms(
    question: &Question,
    low_norms: &[String],
    high_norm: Option<&str>,
) -> Result<String, PromptError> {
    if low_norms.is_empty() {
        return Err(PromptError::EmptyInput { what: "low_norms" });
    }
    let low = format_numbered(low_norms);
    let bindings_common = [
        ("low_norms", low.as_str()),
        ("question", question.text.as_str()),
    ];
    let options = format_options(&question.options);
    match high_norm {
        Some(high) => EVAL_NORMS.render(&[
            bindings_common[0],
            ("high_norm", high),
            bindings_common[1],
            ("options", &options),
        ]),
        None => EVAL_NORMS_LOW.render(&[
            bindings_common[0],
            bindings_common[1],
            ("options", &options),
        ]),
    }
}

/// System prompt for the mining conversations.
pub fn mining_system() -> &'static str {
    MINE_SYSTEM.body()
}

/// Topic-only mining request for exactly `n` norms.
pub fn render_mining_topic_only(country: &str, topic: &str, n: usize) -> Result<String, PromptError> {
    let n = n.to_string();
    MINE_TOPIC_ONLY.render(&[("n", &n), ("country", country), ("topic", topic)])
}

/// One option with its label and answer share.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedOption {
    pub index: u32,
    pub label: String,
    pub share: f64,
}

/// Survey evidence attached to a low-level mining request: either the single
/// majority option, or every option in descending share order.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerEvidence {
    Top1(RankedOption),
    Ranked(Vec<RankedOption>),
}

impl AnswerEvidence {
    /// Majority-only evidence for a question in a country.
    pub fn top1(corpus: &Corpus, question_id: &str, country: &str) -> Result<Self, CorpusError> {
        let q = corpus.question(question_id)?;
        let gt = crate::corpus::ground_truth(corpus, question_id, country)?;
        let ranked = crate::corpus::ranked_answers(corpus, question_id, country)?;
        let share = ranked.iter().find(|&&(i, _)| i == gt).map(|&(_, s)| s).unwrap_or(0.0);
        Ok(AnswerEvidence::Top1(RankedOption {
            index: gt,
            label: q.options[(gt - 1) as usize].clone(),
            share,
        }))
    }

    /// All options in descending share order.
    pub fn ranked(corpus: &Corpus, question_id: &str, country: &str) -> Result<Self, CorpusError> {
        let q = corpus.question(question_id)?;
        let ranked = crate::corpus::ranked_answers(corpus, question_id, country)?;
        Ok(AnswerEvidence::Ranked(
            ranked
                .into_iter()
                .map(|(index, share)| RankedOption {
                    index,
                    label: q.options[(index - 1) as usize].clone(),
                    share,
                })
                .collect(),
        ))
    }

    fn render(&self) -> String {
        match self {
            AnswerEvidence::Top1(o) => format!("{}. {}", o.index, o.label),
            AnswerEvidence::Ranked(options) => options
                .iter()
                .map(|o| format!("{}. {} ({:.1}%)", o.index, o.label, o.share * 100.0))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

/// Low-level mining request grounded in one questionnaire result.
pub fn render_mining_low_level(
    country: &str,
    topic: &str,
    question: &Question,
    evidence: &AnswerEvidence,
) -> Result<String, PromptError> {
    MINE_LOW_LEVEL.render(&[
        ("country", country),
        ("topic", topic),
        ("question", &question.text),
        ("options", &format_options(&question.options)),
        ("answer_block", &evidence.render()),
    ])
}

/// Aggregation request: abstract low-level norms into one high-level norm.
pub fn render_mining_aggregate(
    country: &str,
    topic: &str,
    low_norms: &[String],
) -> Result<String, PromptError> {
    if low_norms.is_empty() {
        return Err(PromptError::EmptyInput { what: "low_norms" });
    }
    MINE_AGGREGATE.render(&[
        ("country", country),
        ("topic", topic),
        ("norms", &format_numbered(low_norms)),
    ])
}

/// Distillation prompt: the standard instruction, plus the question-level
/// norm as reference when present. Without a norm this is byte-identical to
/// the standard instruction.
pub fn render_distill(question: &Question, norm: Option<&str>) -> Result<String, PromptError> {
    match norm {
        Some(norm) => DISTILL_NORM.render(&[
            ("norm", norm),
            ("question", &question.text),
            ("options", &format_options(&question.options)),
        ]),
        None => render_standard(question),
    }
}

/// Stricter format reminder appended when a numbered list fails to parse.
pub fn strict_list_suffix(n: usize) -> String {
    let n = n.to_string();
    MINE_STRICT_SUFFIX
        .render(&[("n", &n)])
        .expect("suffix template has a single bound placeholder")
}
