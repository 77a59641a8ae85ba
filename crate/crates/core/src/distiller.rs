//! Chain-of-thought dataset synthesis by rejection sampling.
//!
//! For each training question the model is asked to reason and answer, up
//! to `rounds` batches of `per_round` completions. A round's results are
//! inspected in positional order and the first completion that both answers
//! with the majority option and carries nonempty think-block reasoning is
//! accepted; the search stops there. When the whole budget fails, the
//! sample is kept without reasoning and the majority answer becomes the
//! target directly.
//!
//! Exported instructions are always the plain question instruction. Norms
//! steer generation only; they never appear in any exported instruction or
//! prompt. Preference pairs hold one correct and one incorrect completion
//! of the same prompt, both with reasoning.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, CorpusSplit};
use crate::error::ErrorCategory;
use crate::extract::{extract_answer, split_think};
use crate::gateway::{sha256_hex, ChatRequest, Gateway, GatewayError};
use crate::miner::NormBank;
use crate::prompting::{self, PromptError};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no mined norm for question {question_id} in country {country}")]
    MissingNorm { country: String, question_id: String },
    #[error("dataset export: {0}")]
    Export(String),
}

impl DistillError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            DistillError::Gateway(e) => e.category(),
            DistillError::Prompt(_) => ErrorCategory::Validation,
            DistillError::Corpus(_) => ErrorCategory::Validation,
            DistillError::MissingNorm { .. } => ErrorCategory::Config,
            DistillError::Export(_) => ErrorCategory::Other,
        }
    }
}

/// Whether generation prompts carry the question-level mined norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillVariant {
    /// Plain chain-of-thought distillation.
    Cot,
    /// Norm-guided distillation; requires a question-keyed norm per sample.
    Cnca,
}

impl DistillVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistillVariant::Cot => "cot",
            DistillVariant::Cnca => "cnca",
        }
    }
}

impl fmt::Display for DistillVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistillVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cot" => Ok(DistillVariant::Cot),
            "cnca" => Ok(DistillVariant::Cnca),
            other => Err(format!("unknown distill variant {other:?} (expected cot or cnca)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistillConfig {
    pub rounds: u32,
    pub per_round: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub base_seed: u64,
    /// Emit every correct x incorrect combination instead of one pair per
    /// question.
    pub dpo_cross_product: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            rounds: 10,
            per_round: 10,
            temperature: 0.6,
            max_tokens: 1024,
            base_seed: 0,
            dpo_cross_product: false,
        }
    }
}

/// One rejection-sampled training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledSample {
    pub question_id: String,
    pub country: String,
    /// The plain question instruction; never contains norms.
    pub instruction: String,
    /// Accepted think-block reasoning; absent for the no-reasoning fallback.
    pub reasoning: Option<String>,
    pub answer: u32,
    /// True when `answer` equals the majority answer (always, by
    /// construction: accepted samples answered it, fallbacks adopt it).
    pub correct: bool,
    pub rounds_used: u32,
    pub calls_used: u32,
    /// Provenance reference of the norm that steered generation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_used: Option<String>,
}

/// Rejection-sample one (question, country). `norm` joins the generation
/// prompt only; the returned sample's instruction stays norm-free.
pub fn synthesize_cot(
    gateway: &Gateway,
    corpus: &Corpus,
    question_id: &str,
    country: &str,
    norm: Option<&str>,
    cfg: &DistillConfig,
) -> Result<DistilledSample, DistillError> {
    let question = corpus.question(question_id)?;
    let ground = crate::corpus::ground_truth(corpus, question_id, country)?;
    let k = question.option_count();
    let system = prompting::render_system(country)?;
    let generation_prompt = prompting::render_distill(question, norm)?;
    let instruction = prompting::render_standard(question)?;

    for round in 1..=cfg.rounds {
        let requests: Vec<ChatRequest> = (1..=cfg.per_round)
            .map(|j| {
                let position = u64::from((round - 1) * cfg.per_round + j);
                ChatRequest::new(system.clone(), generation_prompt.clone())
                    .with_sampling(cfg.temperature, cfg.max_tokens)
                    .with_seed(cfg.base_seed + position)
                    .with_tag(format!("distill/{country}/{question_id}/r{round}"))
            })
            .collect();
        for (j, result) in gateway.complete_batch(&requests).into_iter().enumerate() {
            let response = result?;
            let parts = split_think(&response.content);
            if extract_answer(&response.content, k) == Some(ground) && parts.has_reasoning() {
                return Ok(DistilledSample {
                    question_id: question_id.to_string(),
                    country: country.to_string(),
                    instruction,
                    reasoning: parts.reasoning.map(|r| r.trim().to_string()),
                    answer: ground,
                    correct: true,
                    rounds_used: round,
                    calls_used: (round - 1) * cfg.per_round + j as u32 + 1,
                    norm_used: None,
                });
            }
        }
    }

    Ok(DistilledSample {
        question_id: question_id.to_string(),
        country: country.to_string(),
        instruction,
        reasoning: None,
        answer: ground,
        correct: true,
        rounds_used: cfg.rounds,
        calls_used: cfg.rounds * cfg.per_round,
        norm_used: None,
    })
}

/// Serialize a completion the way reasoning models emit it: think-wrapped
/// reasoning then the answer, or the bare answer without reasoning.
pub fn format_target(reasoning: Option<&str>, answer: u32) -> String {
    match reasoning {
        Some(r) => format!("<think> {r} </think> {answer}"),
        None => answer.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub question_id: String,
    pub country: String,
    pub correct: bool,
    pub rounds_used: u32,
    pub calls_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_used: Option<String>,
}

/// One line of the SFT dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub system: String,
    pub instruction: String,
    pub target: String,
    pub meta: SampleMeta,
}

/// Rejection-sample every (country, train question) and shape the records
/// for supervised fine-tuning. The cnca variant requires a question-keyed
/// norm for every train question and fails before any model call otherwise.
pub fn build_sft_dataset(
    gateway: &Gateway,
    corpus: &Corpus,
    splits: &[CorpusSplit],
    variant: DistillVariant,
    norms: Option<&NormBank>,
    cfg: &DistillConfig,
) -> Result<Vec<SftRecord>, DistillError> {
    // Resolve all norms first so a gap fails fast.
    let mut jobs: Vec<(String, String, Option<String>, Option<String>)> = Vec::new();
    for split in splits {
        for qid in &split.train {
            let (norm_text, norm_ref) = match variant {
                DistillVariant::Cot => (None, None),
                DistillVariant::Cnca => {
                    let topic = &corpus.question(qid)?.topic;
                    let norm = norms
                        .and_then(|bank| bank.get(&split.country, topic))
                        .and_then(|set| set.norm_for_question(qid))
                        .ok_or_else(|| DistillError::MissingNorm {
                            country: split.country.clone(),
                            question_id: qid.clone(),
                        })?;
                    let reference = format!(
                        "{}/{}/{qid}",
                        crate::miner::slug(&split.country),
                        crate::miner::slug(topic)
                    );
                    (Some(norm.to_string()), Some(reference))
                }
            };
            jobs.push((split.country.clone(), qid.clone(), norm_text, norm_ref));
        }
    }

    let mut records = Vec::with_capacity(jobs.len());
    for (country, qid, norm_text, norm_ref) in jobs {
        let mut sample = synthesize_cot(gateway, corpus, &qid, &country, norm_text.as_deref(), cfg)?;
        sample.norm_used = norm_ref;
        records.push(SftRecord {
            system: prompting::render_system(&country)?,
            target: format_target(sample.reasoning.as_deref(), sample.answer),
            instruction: sample.instruction,
            meta: SampleMeta {
                question_id: sample.question_id,
                country: sample.country,
                correct: sample.correct,
                rounds_used: sample.rounds_used,
                calls_used: sample.calls_used,
                norm_used: sample.norm_used,
            },
        });
    }
    Ok(records)
}

/// A preference pair over one prompt: the chosen side answers with the
/// majority option, the rejected side with a different in-range option,
/// both with reasoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoPair {
    pub question_id: String,
    pub country: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

/// A question that produced no pair within the budget, and which side was
/// never seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuestion {
    pub question_id: String,
    pub country: String,
    pub missing: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DpoCollection {
    pub pairs: Vec<DpoPair>,
    pub skipped: Vec<SkippedQuestion>,
}

/// Sample each training question until one correct and one incorrect
/// reasoning-bearing completion exist, then pair them. Questions lacking
/// either side within the budget are skipped with accounting.
pub fn collect_dpo_pairs(
    gateway: &Gateway,
    corpus: &Corpus,
    splits: &[CorpusSplit],
    cfg: &DistillConfig,
) -> Result<DpoCollection, DistillError> {
    let mut collection = DpoCollection::default();
    for split in splits {
        let country = split.country.as_str();
        let system = prompting::render_system(country)?;
        for qid in &split.train {
            let question = corpus.question(qid)?;
            let ground = crate::corpus::ground_truth(corpus, qid, country)?;
            let k = question.option_count();
            let prompt = prompting::render_standard(question)?;

            let mut corrects: Vec<String> = Vec::new();
            let mut incorrects: Vec<String> = Vec::new();
            'rounds: for round in 1..=cfg.rounds {
                let requests: Vec<ChatRequest> = (1..=cfg.per_round)
                    .map(|j| {
                        let position = u64::from((round - 1) * cfg.per_round + j);
                        ChatRequest::new(system.clone(), prompt.clone())
                            .with_sampling(cfg.temperature, cfg.max_tokens)
                            .with_seed(cfg.base_seed + position)
                            .with_tag(format!("dpo/{country}/{qid}/r{round}"))
                    })
                    .collect();
                for result in gateway.complete_batch(&requests) {
                    let response = result?;
                    let parts = split_think(&response.content);
                    if !parts.has_reasoning() {
                        continue;
                    }
                    let Some(answer) = extract_answer(&response.content, k) else {
                        continue;
                    };
                    let completion =
                        format_target(parts.reasoning.as_deref().map(str::trim), answer);
                    if answer == ground {
                        if corrects.is_empty() || cfg.dpo_cross_product {
                            corrects.push(completion);
                        }
                    } else if incorrects.is_empty() || cfg.dpo_cross_product {
                        incorrects.push(completion);
                    }
                    if !cfg.dpo_cross_product && !corrects.is_empty() && !incorrects.is_empty() {
                        break 'rounds;
                    }
                }
            }

            let missing = match (corrects.is_empty(), incorrects.is_empty()) {
                (true, true) => Some("both"),
                (true, false) => Some("correct"),
                (false, true) => Some("incorrect"),
                (false, false) => None,
            };
            if let Some(missing) = missing {
                collection.skipped.push(SkippedQuestion {
                    question_id: qid.clone(),
                    country: country.to_string(),
                    missing: missing.to_string(),
                });
                continue;
            }
            for chosen in &corrects {
                for rejected in &incorrects {
                    collection.pairs.push(DpoPair {
                        question_id: qid.clone(),
                        country: country.to_string(),
                        prompt: prompt.clone(),
                        chosen: chosen.clone(),
                        rejected: rejected.clone(),
                    });
                }
            }
        }
    }
    Ok(collection)
}

/// Write records as one JSON document per line.
pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), DistillError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DistillError::Export(e.to_string()))?;
    }
    let file = std::fs::File::create(path).map_err(|e| DistillError::Export(e.to_string()))?;
    let mut w = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| DistillError::Export(e.to_string()))?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| DistillError::Export(e.to_string()))?;
    }
    w.flush().map_err(|e| DistillError::Export(e.to_string()))
}

/// Export shape expected by preference-training pipelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpoExportRecord {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: DpoMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpoMeta {
    pub question_id: String,
    pub country: String,
}

/// Write preference pairs as line-delimited records. An empty list writes a
/// valid empty file with a warning.
pub fn export_dpo(pairs: &[DpoPair], path: &Path) -> Result<(), DistillError> {
    if pairs.is_empty() {
        log::warn!("exporting empty preference dataset to {}", path.display());
    }
    let records: Vec<DpoExportRecord> = pairs
        .iter()
        .map(|p| DpoExportRecord {
            prompt: p.prompt.clone(),
            chosen: p.chosen.clone(),
            rejected: p.rejected.clone(),
            meta: DpoMeta {
                question_id: p.question_id.clone(),
                country: p.country.clone(),
            },
        })
        .collect();
    write_jsonl(&records, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainStage {
    Sft,
    Dpo,
}

/// Hyperparameters handed to the external trainer, plus a checksum binding
/// the manifest to the exact dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub stage: TrainStage,
    pub learning_rate: f64,
    pub epochs: u32,
    pub warmup_ratio: f64,
    pub lr_schedule: String,
    pub adapter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_provenance: Option<String>,
    pub dataset_file: String,
    pub dataset_sha256: String,
    pub dataset_records: usize,
}

/// Write the training manifest next to a dataset file.
pub fn emit_training_manifest(
    path: &Path,
    stage: TrainStage,
    dataset_path: &Path,
) -> Result<TrainingManifest, DistillError> {
    let bytes = std::fs::read(dataset_path).map_err(|e| DistillError::Export(e.to_string()))?;
    let records = bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count();
    let manifest = TrainingManifest {
        stage,
        learning_rate: 5e-5,
        epochs: 1,
        warmup_ratio: 0.1,
        lr_schedule: "cosine".to_string(),
        adapter: "lora".to_string(),
        beta: (stage == TrainStage::Dpo).then_some(0.1),
        beta_provenance: (stage == TrainStage::Dpo).then(|| "artifact default".to_string()),
        dataset_file: dataset_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        dataset_sha256: sha256_hex(&bytes),
        dataset_records: records,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| DistillError::Export(e.to_string()))?;
    std::fs::write(path, body + "\n").map_err(|e| DistillError::Export(e.to_string()))?;
    Ok(manifest)
}
