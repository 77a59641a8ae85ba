//! Mining cultural norms from questionnaire evidence.
//!
//! Three methods, all grounded in one country and one survey topic:
//!
//! * `Topic`: ask for a fixed number of norms from the topic name alone.
//! * `TopicQuestionTopAnswer`: one low-level norm per training question,
//!   showing only the majority answer, then one aggregated high-level norm.
//! * `TopicQuestionRankedAnswers`: the same, but the question evidence lists
//!   every option with its answer share in descending order.
//!
//! Model output is parsed as a numbered list; when parsing fails the request
//! is retried a bounded number of times with a stricter format reminder and
//! a bumped seed.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, CorpusSplit};
use crate::error::ErrorCategory;
use crate::extract::split_think;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::prompting::{self, AnswerEvidence, PromptError};

pub const NORMSET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no parseable norm list after {attempts} attempt(s) ({tag})")]
    Unparseable { tag: String, attempts: u32 },
    #[error("no training questions for topic {topic:?}")]
    NoTrainQuestions { topic: String },
    #[error("norm store: {0}")]
    Store(String),
    #[error("no mined norms at {}", path.display())]
    NotFound { path: PathBuf },
    #[error("asked for {n} norms but the set holds {available}")]
    BadNormCount { n: usize, available: usize },
}

impl MinerError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            MinerError::Gateway(e) => e.category(),
            MinerError::Prompt(_) => ErrorCategory::Validation,
            MinerError::Corpus(_) => ErrorCategory::Validation,
            MinerError::Unparseable { .. } => ErrorCategory::Parse,
            MinerError::NoTrainQuestions { .. } => ErrorCategory::Validation,
            MinerError::Store(_) => ErrorCategory::Validation,
            MinerError::NotFound { .. } => ErrorCategory::Validation,
            MinerError::BadNormCount { .. } => ErrorCategory::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningMethod {
    Topic,
    TopicQuestionTopAnswer,
    TopicQuestionRankedAnswers,
}

impl MiningMethod {
    pub const ALL: [MiningMethod; 3] = [
        MiningMethod::Topic,
        MiningMethod::TopicQuestionTopAnswer,
        MiningMethod::TopicQuestionRankedAnswers,
    ];

    /// Short form used in filenames and CLI flags.
    pub fn slug(&self) -> &'static str {
        match self {
            MiningMethod::Topic => "t",
            MiningMethod::TopicQuestionTopAnswer => "tq-ta",
            MiningMethod::TopicQuestionRankedAnswers => "tq-ra",
        }
    }
}

impl fmt::Display for MiningMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for MiningMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "t" | "topic" => Ok(MiningMethod::Topic),
            "tq-ta" => Ok(MiningMethod::TopicQuestionTopAnswer),
            "tq-ra" => Ok(MiningMethod::TopicQuestionRankedAnswers),
            other => Err(format!(
                "unknown mining method {other:?} (expected t, tq-ta, or tq-ra)"
            )),
        }
    }
}

/// One mined norm; question-grounded norms carry their source question id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CulturalNorm {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
}

/// Every norm mined for one (country, topic, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSet {
    pub schema_version: u32,
    pub country: String,
    pub topic: String,
    pub method: MiningMethod,
    pub model_id: String,
    /// Unix seconds; honors `SOURCE_DATE_EPOCH` for reproducible artifacts.
    pub created_at: u64,
    pub low_norms: Vec<CulturalNorm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high_norm: Option<String>,
}

impl NormSet {
    pub fn low_texts(&self) -> Vec<String> {
        self.low_norms.iter().map(|n| n.text.clone()).collect()
    }

    /// The norm mined from this specific question, when the method keeps
    /// that association.
    pub fn norm_for_question(&self, question_id: &str) -> Option<&str> {
        self.low_norms
            .iter()
            .find(|n| n.question_id.as_deref() == Some(question_id))
            .map(|n| n.text.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct MiningConfig {
    /// Norm count requested by the topic-only method.
    pub norms_per_topic: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    /// Extra attempts with a stricter format reminder when parsing fails.
    pub reparse_budget: u32,
    /// Overrides wall-clock time in the artifact when set.
    pub fixed_timestamp: Option<u64>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            norms_per_topic: 5,
            temperature: 0.6,
            max_tokens: 1024,
            seed: 0,
            reparse_budget: 2,
            fixed_timestamp: None,
        }
    }
}

fn now_unix() -> u64 {
    if let Some(forced) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        return forced;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Mine one (country, topic) cell with the given method. Question-grounded
/// methods draw evidence from the split's training questions only.
pub fn mine(
    gateway: &Gateway,
    corpus: &Corpus,
    split: &CorpusSplit,
    topic: &str,
    method: MiningMethod,
    cfg: &MiningConfig,
) -> Result<NormSet, MinerError> {
    let country = split.country.as_str();
    let system = prompting::mining_system();

    let (low_norms, high_norm) = match method {
        MiningMethod::Topic => {
            let prompt = prompting::render_mining_topic_only(country, topic, cfg.norms_per_topic)?;
            let tag = format!("mine:{}:{country}:{topic}", method.slug());
            let texts = ask_list(gateway, system, &prompt, cfg.norms_per_topic, cfg, &tag)?;
            let norms = texts
                .into_iter()
                .map(|text| CulturalNorm { text, question_id: None })
                .collect();
            (norms, None)
        }
        MiningMethod::TopicQuestionTopAnswer | MiningMethod::TopicQuestionRankedAnswers => {
            let train: Vec<&str> = split
                .train
                .iter()
                .map(String::as_str)
                .filter(|qid| {
                    corpus
                        .question(qid)
                        .map(|q| q.topic == topic)
                        .unwrap_or(false)
                })
                .collect();
            if train.is_empty() {
                return Err(MinerError::NoTrainQuestions { topic: topic.to_string() });
            }
            let mut norms = Vec::with_capacity(train.len());
            for qid in &train {
                let question = corpus.question(qid)?;
                let evidence = match method {
                    MiningMethod::TopicQuestionTopAnswer => {
                        AnswerEvidence::top1(corpus, qid, country)?
                    }
                    _ => AnswerEvidence::ranked(corpus, qid, country)?,
                };
                let prompt =
                    prompting::render_mining_low_level(country, topic, question, &evidence)?;
                let tag = format!("mine:{}:{country}:{qid}", method.slug());
                let texts = ask_list(gateway, system, &prompt, 1, cfg, &tag)?;
                norms.push(CulturalNorm {
                    text: texts.into_iter().next().expect("list of exactly one"),
                    question_id: Some((*qid).to_string()),
                });
            }
            let low_texts: Vec<String> = norms.iter().map(|n| n.text.clone()).collect();
            let prompt = prompting::render_mining_aggregate(country, topic, &low_texts)?;
            let tag = format!("mine:{}:{country}:{topic}:aggregate", method.slug());
            let high = ask_list(gateway, system, &prompt, 1, cfg, &tag)?
                .into_iter()
                .next()
                .expect("list of exactly one");
            (norms, Some(high))
        }
    };

    Ok(NormSet {
        schema_version: NORMSET_SCHEMA_VERSION,
        country: country.to_string(),
        topic: topic.to_string(),
        method,
        model_id: gateway.model_id().to_string(),
        created_at: cfg.fixed_timestamp.unwrap_or_else(now_unix),
        low_norms,
        high_norm,
    })
}

/// One completion attempt per parse failure, each appending the strict
/// format reminder and bumping the seed so the retry is a distinct request.
fn ask_list(
    gateway: &Gateway,
    system: &str,
    base_prompt: &str,
    n: usize,
    cfg: &MiningConfig,
    tag: &str,
) -> Result<Vec<String>, MinerError> {
    let attempts = cfg.reparse_budget + 1;
    for attempt in 0..attempts {
        let prompt = if attempt == 0 {
            base_prompt.to_string()
        } else {
            format!("{base_prompt}\n{}", prompting::strict_list_suffix(n))
        };
        let req = ChatRequest::new(system, prompt)
            .with_sampling(cfg.temperature, cfg.max_tokens)
            .with_seed(cfg.seed + u64::from(attempt))
            .with_tag(tag);
        let response = gateway.complete(&req)?;
        if let Some(items) = parse_norm_list(&response.content, n) {
            return Ok(items);
        }
        log::warn!("unparseable norm list on attempt {} ({tag})", attempt + 1);
    }
    Err(MinerError::Unparseable { tag: tag.to_string(), attempts })
}

/// Extract exactly `n` norms from a completion. Accepts `1.` / `1)` / `1:`
/// numbering and `-`/`*` bullets, ignores prose lines around the list, and
/// strips matching surrounding quotes. A single-item list may also be a bare
/// line of prose. Returns `None` unless exactly `n` items are found.
pub fn parse_norm_list(raw: &str, n: usize) -> Option<Vec<String>> {
    let body = split_think(raw).after_think;
    let mut items = Vec::new();
    for line in body.lines() {
        if let Some(item) = list_item(line) {
            if !item.is_empty() {
                items.push(item);
            }
        }
    }
    if items.len() == n {
        return Some(items);
    }
    if n == 1 && items.is_empty() {
        let line = body.lines().map(str::trim).find(|l| !l.is_empty())?;
        let text = unquote(line);
        if !text.is_empty() {
            return Some(vec![text]);
        }
    }
    None
}

fn list_item(line: &str) -> Option<String> {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        return Some(unquote(rest.trim()));
    }
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix(['.', ')', ':'])?;
    Some(unquote(rest.trim()))
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    let stripped = s
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .or_else(|| s.strip_prefix('\u{201c}').and_then(|t| t.strip_suffix('\u{201d}')));
    stripped.unwrap_or(s).trim().to_string()
}

/// The first `n` low-level norms in stored order plus the high-level norm.
/// Backs the norm-count sweep: n must be positive and within the set.
pub fn select_norms(set: &NormSet, n: usize) -> Result<(Vec<String>, Option<String>), MinerError> {
    if n == 0 || n > set.low_norms.len() {
        return Err(MinerError::BadNormCount { n, available: set.low_norms.len() });
    }
    let low = set.low_norms[..n].iter().map(|norm| norm.text.clone()).collect();
    Ok((low, set.high_norm.clone()))
}

/// In-memory collection of norm sets keyed by (country, topic).
#[derive(Debug, Default, Clone)]
pub struct NormBank {
    sets: std::collections::BTreeMap<(String, String), NormSet>,
}

impl NormBank {
    /// Load one method's norm sets for every (country, topic) pair.
    pub fn load<'a>(
        dir: &Path,
        method: MiningMethod,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, MinerError> {
        let mut bank = NormBank::default();
        for (country, topic) in pairs {
            bank.insert(load_norms(dir, country, topic, method)?);
        }
        Ok(bank)
    }

    pub fn insert(&mut self, set: NormSet) {
        self.sets.insert((set.country.clone(), set.topic.clone()), set);
    }

    pub fn get(&self, country: &str, topic: &str) -> Option<&NormSet> {
        self.sets.get(&(country.to_string(), topic.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> impl Iterator<Item = &NormSet> {
        self.sets.values()
    }
}

/// Lowercase filename-safe form of a country or topic name.
pub fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_dash = false;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_dash = true;
        }
    }
    out
}

fn norm_set_path(dir: &Path, country: &str, topic: &str, method: MiningMethod) -> PathBuf {
    dir.join(format!(
        "{}.{}.{}.json",
        slug(country),
        slug(topic),
        method.slug()
    ))
}

/// Write a norm set under `dir`, one JSON file per (country, topic, method).
pub fn save_norms(dir: &Path, set: &NormSet) -> Result<PathBuf, MinerError> {
    std::fs::create_dir_all(dir).map_err(|e| MinerError::Store(e.to_string()))?;
    let path = norm_set_path(dir, &set.country, &set.topic, set.method);
    let body = serde_json::to_string_pretty(set).map_err(|e| MinerError::Store(e.to_string()))?;
    std::fs::write(&path, body + "\n").map_err(|e| MinerError::Store(e.to_string()))?;
    Ok(path)
}

pub fn load_norms(
    dir: &Path,
    country: &str,
    topic: &str,
    method: MiningMethod,
) -> Result<NormSet, MinerError> {
    let path = norm_set_path(dir, country, topic, method);
    if !path.exists() {
        return Err(MinerError::NotFound { path });
    }
    let body = std::fs::read_to_string(&path).map_err(|e| MinerError::Store(e.to_string()))?;
    serde_json::from_str(&body)
        .map_err(|e| MinerError::Store(format!("corrupt norm set {}: {e}", path.display())))
}
