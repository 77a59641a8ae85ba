//! Alignment evaluation: prompt the model as a persona of each country,
//! extract option answers, and score agreement with the majority answers.
//!
//! Three prompt modes share one execution path: `standard` (bare question),
//! `icl` (same-topic training cases prepended), and `norms` (mined cultural
//! norms prepended). Each (country, test question, trial) is one slot;
//! slots fan out through the gateway with bounded parallelism, and vectors
//! assemble in stable test order afterwards, so scores are independent of
//! completion timing.
//!
//! Completions that never yield an in-range answer are re-asked with fresh
//! seeds a bounded number of times, then substituted with the answer
//! farthest from the majority one and counted into the invalid rate.

mod cdeval;
mod score;
mod stats;

pub use cdeval::{cdeval_score, CdevalReport, CDEVAL_REPORT_SCHEMA_VERSION};
pub use score::{alignment_score, max_distance, worst_case_answer};
pub use stats::{paired_t_test, PairedTTest};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::corpus::{CdevalCorpus, Corpus, CorpusError, CorpusSplit, Question};
use crate::error::ErrorCategory;
use crate::extract::extract_answer;
use crate::gateway::{map_bounded, ChatRequest, Gateway, GatewayError};
use crate::miner::{select_norms, MinerError, MiningMethod, NormBank};
use crate::prompting::{self, IclCase, PromptError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Seed stride between re-asks of one slot, so a re-ask is a distinct
/// request while trial seeds (base + trial) stay collision-free.
const REASK_SEED_STRIDE: u64 = 1_000_003;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error("{what} must not be empty")]
    EmptyInput { what: &'static str },
    #[error("option count at position {index} is {k}, need at least 2")]
    OptionCountTooSmall { index: usize, k: u32 },
    #[error("vector lengths differ: answers {answers}, reference {reference}, counts {counts}")]
    LengthMismatch {
        answers: usize,
        reference: usize,
        counts: usize,
    },
    #[error("answer {value} at position {index} outside 1..={k}")]
    AnswerOutOfRange { index: usize, value: u32, k: u32 },
    #[error("paired samples differ in length: {a} vs {b}")]
    SampleLengthMismatch { a: usize, b: usize },
    #[error("need at least 2 paired samples, got {len}")]
    SampleTooShort { len: usize },
    #[error("no mined norms for country {country}, topic {topic}")]
    MissingNorms { country: String, topic: String },
    #[error("no training cases for country {country}, topic {topic}")]
    MissingCases { country: String, topic: String },
    #[error("no answers for country {country}")]
    MissingAnswers { country: String },
    #[error("no answer for item {item} in country {country}")]
    MissingItemAnswer { country: String, item: String },
}

impl EvalError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EvalError::Gateway(e) => e.category(),
            EvalError::Miner(e) => e.category(),
            EvalError::Prompt(_) => ErrorCategory::Validation,
            EvalError::Corpus(_) => ErrorCategory::Validation,
            EvalError::MissingNorms { .. } | EvalError::MissingCases { .. } => {
                ErrorCategory::Config
            }
            _ => ErrorCategory::Validation,
        }
    }
}

/// Which instruction the evaluation renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Standard,
    Icl,
    Norms,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::Standard, EvalMode::Icl, EvalMode::Norms];

    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::Standard => "standard",
            EvalMode::Icl => "icl",
            EvalMode::Norms => "norms",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(EvalMode::Standard),
            "icl" => Ok(EvalMode::Icl),
            "norms" => Ok(EvalMode::Norms),
            other => Err(format!(
                "unknown mode {other:?} (expected standard, icl, or norms)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub trials: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub base_seed: u64,
    /// Low-level norms injected per question in norms mode.
    pub num_norms: usize,
    /// Re-asks (fresh seeds) granted before substituting a worst-case answer.
    pub reask_budget: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            trials: 3,
            temperature: 0.6,
            max_tokens: 1024,
            base_seed: 0,
            num_norms: 5,
            reask_budget: 5,
        }
    }
}

/// One model answer for one (country, question, trial) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub country: String,
    pub trial: u32,
    pub raw_text: String,
    /// Parsed option index, or `None` when every attempt stayed invalid.
    pub extracted: Option<u32>,
    /// The value entering the score vector: `extracted`, or the worst-case
    /// substitute for an invalid slot.
    pub final_answer: u32,
    /// Completions requested for this slot (1 + re-asks used).
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryScores {
    pub country: String,
    /// One score per trial, trial order.
    pub trial_scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over trials; 0 for a single trial.
    pub std: f64,
}

/// Everything identifying a run's configuration, for manifests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_norms: Option<usize>,
    pub trials: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub base_seed: u64,
    pub model_id: String,
    pub corpus_checksum: String,
    pub template_versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub schema_version: u32,
    pub mode: EvalMode,
    pub model_id: String,
    /// Sorted by country name.
    pub countries: Vec<CountryScores>,
    /// Unweighted mean of the per-country means.
    pub overall_mean: f64,
    /// Fraction of slots that stayed invalid after all re-asks.
    pub invalid_rate: f64,
    pub fingerprint: ConfigFingerprint,
    pub answers: Vec<AnswerRecord>,
}

impl AlignmentReport {
    pub fn country(&self, name: &str) -> Option<&CountryScores> {
        self.countries.iter().find(|c| c.country == name)
    }

    /// Mean score keyed by country, for pairing runs in t-tests.
    pub fn country_means(&self) -> BTreeMap<String, f64> {
        self.countries
            .iter()
            .map(|c| (c.country.clone(), c.mean))
            .collect()
    }
}

fn template_versions_owned() -> BTreeMap<String, String> {
    prompting::template_versions()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Norm source for norms-mode evaluation: which mining method's store to
/// read and how many low-level norms to inject.
pub struct NormSource<'a> {
    pub bank: &'a NormBank,
    pub method: MiningMethod,
}

struct Slot<'a> {
    country: &'a str,
    question: &'a Question,
    ground: u32,
    trial: u32,
    system: String,
    instruction: String,
}

/// Run the alignment evaluation over one split per country.
///
/// Norms mode requires `norms` and fails before any model call if a norm
/// set is missing for some (country, topic); ICL mode fails likewise when a
/// topic has no training cases.
pub fn run_eval(
    gateway: &Gateway,
    corpus: &Corpus,
    splits: &[CorpusSplit],
    mode: EvalMode,
    norms: Option<&NormSource>,
    cfg: &EvalConfig,
) -> Result<AlignmentReport, EvalError> {
    if splits.is_empty() {
        return Err(EvalError::EmptyInput { what: "splits" });
    }
    if cfg.trials == 0 {
        return Err(EvalError::EmptyInput { what: "trials" });
    }

    // Render every slot up front: any missing norms or cases must surface
    // before the first model call.
    let mut slots: Vec<Slot> = Vec::new();
    for split in splits {
        let country = split.country.as_str();
        let system = prompting::render_system(country)?;
        let mut cases_by_topic: BTreeMap<&str, Vec<IclCase>> = BTreeMap::new();
        if mode == EvalMode::Icl {
            for qid in &split.train {
                let topic = corpus.question(qid)?.topic.as_str();
                cases_by_topic
                    .entry(topic)
                    .or_default()
                    .push(IclCase::from_corpus(corpus, qid, country)?);
            }
        }
        for qid in &split.test {
            let question = corpus.question(qid)?;
            let ground = crate::corpus::ground_truth(corpus, qid, country)?;
            let instruction = match mode {
                EvalMode::Standard => prompting::render_standard(question)?,
                EvalMode::Icl => {
                    let cases = cases_by_topic.get(question.topic.as_str()).ok_or_else(|| {
                        EvalError::MissingCases {
                            country: country.to_string(),
                            topic: question.topic.clone(),
                        }
                    })?;
                    prompting::render_icl(question, cases)?
                }
                EvalMode::Norms => {
                    let source = norms.ok_or(EvalError::EmptyInput { what: "norm source" })?;
                    let set = source.bank.get(country, &question.topic).ok_or_else(|| {
                        EvalError::MissingNorms {
                            country: country.to_string(),
                            topic: question.topic.clone(),
                        }
                    })?;
                    let (low, high) = select_norms(set, cfg.num_norms)?;
                    prompting::render_with_norms(question, &low, high.as_deref())?
                }
            };
            for trial in 1..=cfg.trials {
                slots.push(Slot {
                    country,
                    question,
                    ground,
                    trial,
                    system: system.clone(),
                    instruction: instruction.clone(),
                });
            }
        }
    }

    let results = map_bounded(gateway.max_parallel(), &slots, |_, slot| {
        answer_slot(gateway, slot, cfg)
    });
    let mut answers = Vec::with_capacity(results.len());
    for result in results {
        answers.push(result?);
    }

    assemble_report(corpus, splits, mode, norms, cfg, gateway.model_id(), answers)
}

/// Ask one slot's question, re-asking with fresh seeds while the completion
/// fails to parse; substitute the farthest-from-majority answer after the
/// budget is spent.
fn answer_slot(gateway: &Gateway, slot: &Slot, cfg: &EvalConfig) -> Result<AnswerRecord, EvalError> {
    let k = slot.question.option_count();
    let trial_seed = cfg.base_seed + u64::from(slot.trial);
    let mut raw_text = String::new();
    for attempt in 0..=cfg.reask_budget {
        let req = ChatRequest::new(slot.system.clone(), slot.instruction.clone())
            .with_sampling(cfg.temperature, cfg.max_tokens)
            .with_seed(trial_seed + REASK_SEED_STRIDE * u64::from(attempt))
            .with_tag(format!(
                "eval/{}/{}/trial{}",
                slot.country, slot.question.id, slot.trial
            ));
        let response = gateway.complete(&req)?;
        raw_text = response.content;
        if let Some(extracted) = extract_answer(&raw_text, k) {
            return Ok(AnswerRecord {
                question_id: slot.question.id.clone(),
                country: slot.country.to_string(),
                trial: slot.trial,
                raw_text,
                extracted: Some(extracted),
                final_answer: extracted,
                attempts: attempt + 1,
            });
        }
    }
    Ok(AnswerRecord {
        question_id: slot.question.id.clone(),
        country: slot.country.to_string(),
        trial: slot.trial,
        raw_text,
        extracted: None,
        final_answer: worst_case_answer(slot.ground, k),
        attempts: cfg.reask_budget + 1,
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    corpus: &Corpus,
    splits: &[CorpusSplit],
    mode: EvalMode,
    norms: Option<&NormSource>,
    cfg: &EvalConfig,
    model_id: &str,
    answers: Vec<AnswerRecord>,
) -> Result<AlignmentReport, EvalError> {
    let mut by_slot: BTreeMap<(&str, u32, &str), u32> = BTreeMap::new();
    for a in &answers {
        by_slot.insert((a.country.as_str(), a.trial, a.question_id.as_str()), a.final_answer);
    }

    let mut countries = Vec::with_capacity(splits.len());
    let mut sorted_splits: Vec<&CorpusSplit> = splits.iter().collect();
    sorted_splits.sort_by(|a, b| a.country.cmp(&b.country));
    for split in sorted_splits {
        let country = split.country.as_str();
        let mut reference = Vec::with_capacity(split.test.len());
        let mut counts = Vec::with_capacity(split.test.len());
        for qid in &split.test {
            reference.push(crate::corpus::ground_truth(corpus, qid, country)?);
            counts.push(corpus.question(qid)?.option_count());
        }
        let mut trial_scores = Vec::with_capacity(cfg.trials as usize);
        for trial in 1..=cfg.trials {
            let vector: Vec<u32> = split
                .test
                .iter()
                .map(|qid| by_slot[&(country, trial, qid.as_str())])
                .collect();
            trial_scores.push(alignment_score(&vector, &reference, &counts)?);
        }
        let mean = trial_scores.iter().sum::<f64>() / trial_scores.len() as f64;
        let std = if trial_scores.len() < 2 {
            0.0
        } else {
            let var = trial_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                / (trial_scores.len() - 1) as f64;
            var.sqrt()
        };
        countries.push(CountryScores {
            country: country.to_string(),
            trial_scores,
            mean,
            std,
        });
    }

    let overall_mean = countries.iter().map(|c| c.mean).sum::<f64>() / countries.len() as f64;
    let invalid = answers.iter().filter(|a| a.extracted.is_none()).count();
    let invalid_rate = invalid as f64 / answers.len().max(1) as f64;

    Ok(AlignmentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode,
        model_id: model_id.to_string(),
        countries,
        overall_mean,
        invalid_rate,
        fingerprint: ConfigFingerprint {
            mode: mode.to_string(),
            method: norms.map(|s| s.method.to_string()),
            num_norms: (mode == EvalMode::Norms).then_some(cfg.num_norms),
            trials: cfg.trials,
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            base_seed: cfg.base_seed,
            model_id: model_id.to_string(),
            corpus_checksum: corpus.checksum().to_string(),
            template_versions: template_versions_owned(),
        },
        answers,
    })
}

/// Outcome of a benchmark pass: the scored report plus raw answers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdevalRun {
    pub report: CdevalReport,
    pub answers: Vec<AnswerRecord>,
}

/// Ask every (country, item) once under the persona system prompt and score
/// tendency matches. Invalid completions re-ask then substitute the option
/// opposite the country's ground tendency.
pub fn run_cdeval(
    gateway: &Gateway,
    cdeval: &CdevalCorpus,
    countries: &[String],
    cfg: &EvalConfig,
) -> Result<CdevalRun, EvalError> {
    if countries.is_empty() {
        return Err(EvalError::EmptyInput { what: "countries" });
    }

    struct ItemSlot<'a> {
        country: &'a str,
        item_id: String,
        ground: u32,
        system: String,
        instruction: String,
    }

    let mut slots = Vec::new();
    for country in countries {
        let system = prompting::render_system(country)?;
        for item in cdeval.items() {
            let Some(&ground) = item.ground_tendency.get(country) else {
                continue;
            };
            let question = Question {
                id: item.id.clone(),
                topic: item.dimension.to_string(),
                text: item.text.clone(),
                options: item.options.clone(),
                distributions: BTreeMap::new(),
            };
            slots.push(ItemSlot {
                country,
                item_id: item.id.clone(),
                ground,
                system: system.clone(),
                instruction: prompting::render_standard(&question)?,
            });
        }
    }
    if slots.is_empty() {
        return Err(EvalError::EmptyInput { what: "benchmark slots" });
    }

    let results = map_bounded(
        gateway.max_parallel(),
        &slots,
        |_, slot| -> Result<AnswerRecord, EvalError> {
            let trial_seed = cfg.base_seed + 1;
            let mut raw_text = String::new();
            for attempt in 0..=cfg.reask_budget {
                let req = ChatRequest::new(slot.system.clone(), slot.instruction.clone())
                    .with_sampling(cfg.temperature, cfg.max_tokens)
                    .with_seed(trial_seed + REASK_SEED_STRIDE * u64::from(attempt))
                    .with_tag(format!("cdeval/{}/{}", slot.country, slot.item_id));
                let response = gateway.complete(&req)?;
                raw_text = response.content;
                if let Some(extracted) = extract_answer(&raw_text, 2) {
                    return Ok(AnswerRecord {
                        question_id: slot.item_id.clone(),
                        country: slot.country.to_string(),
                        trial: 1,
                        raw_text,
                        extracted: Some(extracted),
                        final_answer: extracted,
                        attempts: attempt + 1,
                    });
                }
            }
            Ok(AnswerRecord {
                question_id: slot.item_id.clone(),
                country: slot.country.to_string(),
                trial: 1,
                raw_text,
                extracted: None,
                final_answer: 3 - slot.ground,
                attempts: cfg.reask_budget + 1,
            })
        },
    );

    let mut answers: Vec<AnswerRecord> = Vec::with_capacity(results.len());
    for result in results {
        answers.push(result?);
    }

    let mut by_country: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for a in &answers {
        by_country
            .entry(a.country.clone())
            .or_default()
            .insert(a.question_id.clone(), a.final_answer);
    }
    let mut report = cdeval_score(&by_country, cdeval, countries)?;
    let invalid = answers.iter().filter(|a| a.extracted.is_none()).count();
    report.invalid_rate = invalid as f64 / answers.len() as f64;
    Ok(CdevalRun { report, answers })
}
