//! Run orchestration: corpora in, reproducible artifact directories out.
//!
//! Every run writes its primary output (report or dataset), a flat CSV view
//! where one applies, and a `manifest.json` binding the run to its exact
//! configuration, template versions, corpus checksum, and artifact
//! checksums. Serialization is deterministic; wall-clock time never enters
//! an artifact unless pinned through `fixed_timestamp` or the
//! `SOURCE_DATE_EPOCH` environment variable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_train_test, CdevalCorpus, Corpus, CorpusSplit};
use crate::distiller::{
    self, DistillConfig, DistillVariant, TrainStage,
};
use crate::error::Error;
use crate::evaluator::{
    self, AlignmentReport, CdevalReport, EvalConfig, EvalMode, NormSource, PairedTTest,
};
use crate::gateway::{sha256_hex, Gateway, HttpBackend};
use crate::miner::{self, MinerError, MiningConfig, MiningMethod, NormBank};
use crate::prompting::template_versions;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Chat endpoint URL, for live backends.
pub const ENV_ENDPOINT: &str = "CULTUREKIT_ENDPOINT";
/// Bearer token, optional.
pub const ENV_API_KEY: &str = "CULTUREKIT_API_KEY";
/// Model identifier sent with every request.
pub const ENV_MODEL: &str = "CULTUREKIT_MODEL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("environment variable {name} is not set and no replay directory was given")]
    MissingEnv { name: &'static str },
    #[error("recording and replaying cannot be combined in one run")]
    RecordAndReplay,
    #[error("invalid {field}: {message}")]
    BadValue { field: &'static str, message: String },
    #[error("norm sets unavailable: {0}")]
    NormsUnavailable(MinerError),
    #[error("cannot use run artifact {path}: {message}")]
    Artifact { path: String, message: String },
}

/// Everything a run needs beyond the corpus and the gateway.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Countries to run; empty means every country in the corpus header.
    pub countries: Vec<String>,
    /// Topics to mine; empty means every topic in the corpus header.
    pub topics: Vec<String>,
    pub mode: EvalMode,
    pub method: MiningMethod,
    pub variant: DistillVariant,
    pub num_norms: usize,
    pub trials: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub parallelism: usize,
    /// Train questions per topic (the split parameter m).
    pub train_per_topic: usize,
    pub rounds: u32,
    pub per_round: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Norm set directory; defaults to `<out_dir>/norms`.
    pub norms_dir: Option<PathBuf>,
    /// Pin artifact timestamps for reproducible output.
    pub fixed_timestamp: Option<u64>,
    pub dpo_cross_product: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            countries: Vec::new(),
            topics: Vec::new(),
            mode: EvalMode::Standard,
            method: MiningMethod::TopicQuestionTopAnswer,
            variant: DistillVariant::Cot,
            num_norms: 5,
            trials: 3,
            temperature: 0.6,
            max_tokens: 1024,
            parallelism: 4,
            train_per_topic: 5,
            rounds: 10,
            per_round: 10,
            seed: 0,
            out_dir: PathBuf::from("run-out"),
            norms_dir: None,
            fixed_timestamp: None,
            dpo_cross_product: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::BadValue {
                    field,
                    message: "must be at least 1".into(),
                })
            }
        };
        positive("trials", self.trials >= 1)?;
        positive("parallelism", self.parallelism >= 1)?;
        positive("num-norms", self.num_norms >= 1)?;
        positive("rounds", self.rounds >= 1)?;
        positive("per-round", self.per_round >= 1)?;
        positive("max-tokens", self.max_tokens >= 1)?;
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ConfigError::BadValue {
                field: "temperature",
                message: format!("{} is not a valid sampling temperature", self.temperature),
            });
        }
        Ok(())
    }

    pub fn norms_dir(&self) -> PathBuf {
        self.norms_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("norms"))
    }
}

/// Build a gateway from the environment, a recording directory, or a replay
/// directory. Replay needs no environment; live and recording runs require
/// the endpoint and model variables before any work starts.
pub fn gateway_from_env(
    record: Option<&Path>,
    replay: Option<&Path>,
    parallelism: usize,
) -> Result<Gateway, Error> {
    if record.is_some() && replay.is_some() {
        return Err(ConfigError::RecordAndReplay.into());
    }
    let gateway = match replay {
        Some(dir) => Gateway::replay(dir)?,
        None => {
            let endpoint = std::env::var(ENV_ENDPOINT)
                .map_err(|_| ConfigError::MissingEnv { name: ENV_ENDPOINT })?;
            let model = std::env::var(ENV_MODEL)
                .map_err(|_| ConfigError::MissingEnv { name: ENV_MODEL })?;
            let api_key = std::env::var(ENV_API_KEY).ok();
            let backend = Box::new(HttpBackend::new(endpoint, api_key, model));
            match record {
                Some(dir) => Gateway::recording(backend, dir)?,
                None => Gateway::new(backend),
            }
        }
    };
    Ok(gateway.with_max_parallel(parallelism))
}

fn resolve_countries(corpus_countries: &[String], requested: &[String]) -> Result<Vec<String>, ConfigError> {
    if requested.is_empty() {
        return Ok(corpus_countries.to_vec());
    }
    for c in requested {
        if !corpus_countries.contains(c) {
            return Err(ConfigError::BadValue {
                field: "countries",
                message: format!("country {c:?} is not in the corpus header"),
            });
        }
    }
    Ok(requested.to_vec())
}

fn resolve_topics(corpus: &Corpus, requested: &[String]) -> Result<Vec<String>, ConfigError> {
    if requested.is_empty() {
        return Ok(corpus.topics().to_vec());
    }
    for t in requested {
        if !corpus.topics().contains(t) {
            return Err(ConfigError::BadValue {
                field: "topics",
                message: format!("topic {t:?} is not in the corpus header"),
            });
        }
    }
    Ok(requested.to_vec())
}

fn build_splits(
    corpus: &Corpus,
    countries: &[String],
    m: usize,
) -> Result<Vec<CorpusSplit>, Error> {
    countries
        .iter()
        .map(|c| split_train_test(corpus, c, m, None).map_err(Error::from))
        .collect()
}

fn pinned_timestamp(cfg: &RunConfig) -> Option<u64> {
    cfg.fixed_timestamp.or_else(|| {
        std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok())
    })
}

/// Run settings echoed into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestSettings {
    pub mode: EvalMode,
    pub method: MiningMethod,
    pub variant: DistillVariant,
    pub num_norms: usize,
    pub trials: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub parallelism: usize,
    pub train_per_topic: usize,
    pub rounds: u32,
    pub per_round: u32,
    pub seed: u64,
}

impl ManifestSettings {
    fn from_config(cfg: &RunConfig) -> Self {
        ManifestSettings {
            mode: cfg.mode,
            method: cfg.method,
            variant: cfg.variant,
            num_norms: cfg.num_norms,
            trials: cfg.trials,
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            parallelism: cfg.parallelism,
            train_per_topic: cfg.train_per_topic,
            rounds: cfg.rounds,
            per_round: cfg.per_round,
            seed: cfg.seed,
        }
    }
}

/// What a run was, exactly: configuration, code-side template versions, the
/// corpus identity, and a checksum for every artifact the run wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub backend_id: String,
    pub model_id: String,
    pub corpus_checksum: String,
    pub template_versions: BTreeMap<String, String>,
    pub countries: Vec<String>,
    pub topics: Vec<String>,
    pub settings: ManifestSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    /// Artifact file name to sha256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

/// Write bytes then rename into place, so partial files never land under
/// the final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

struct ArtifactSet {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl ArtifactSet {
    fn new(dir: &Path) -> Self {
        ArtifactSet {
            dir: dir.to_path_buf(),
            checksums: BTreeMap::new(),
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Error> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Register a file another writer produced.
    fn adopt(&mut self, name: &str, path: &Path) -> Result<(), Error> {
        let bytes = std::fs::read(path)?;
        self.checksums.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn finish(
        self,
        command: &str,
        gateway: &Gateway,
        corpus_checksum: &str,
        countries: Vec<String>,
        topics: Vec<String>,
        cfg: &RunConfig,
    ) -> Result<RunManifest, Error> {
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            backend_id: gateway.backend_id().to_string(),
            model_id: gateway.model_id().to_string(),
            corpus_checksum: corpus_checksum.to_string(),
            template_versions: template_versions()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            countries,
            topics,
            settings: ManifestSettings::from_config(cfg),
            created_unix: pinned_timestamp(cfg),
            artifacts: self.checksums,
        };
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        write_atomic(&self.dir.join("manifest.json"), (body + "\n").as_bytes())?;
        Ok(manifest)
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Error> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    Ok((body + "\n").into_bytes())
}

#[derive(Debug, Serialize)]
struct ScoreRow<'a> {
    country: &'a str,
    trial: u32,
    score: f64,
}

fn alignment_csv(report: &AlignmentReport) -> Result<Vec<u8>, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &report.countries {
        for (i, &score) in c.trial_scores.iter().enumerate() {
            w.serialize(ScoreRow {
                country: &c.country,
                trial: i as u32 + 1,
                score,
            })
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        }
    }
    w.into_inner()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e).into())
}

fn cdeval_csv(report: &CdevalReport) -> Result<Vec<u8>, Error> {
    #[derive(Serialize)]
    struct Row<'a> {
        dimension: &'a str,
        score: f64,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for (dimension, &score) in &report.dimension_scores {
        w.serialize(Row { dimension, score })
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    }
    w.into_inner()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e).into())
}

#[derive(Debug)]
pub struct MineOutcome {
    pub manifest: RunManifest,
    pub norm_paths: Vec<PathBuf>,
}

/// Mine norm sets for every (country, topic) pair and store them under the
/// norms directory.
pub fn run_mine(gateway: &Gateway, corpus: &Corpus, cfg: &RunConfig) -> Result<MineOutcome, Error> {
    cfg.validate()?;
    let countries = resolve_countries(corpus.countries(), &cfg.countries)?;
    let topics = resolve_topics(corpus, &cfg.topics)?;
    let norms_dir = cfg.norms_dir();
    let mining = MiningConfig {
        norms_per_topic: cfg.num_norms,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        seed: cfg.seed,
        fixed_timestamp: pinned_timestamp(cfg),
        ..MiningConfig::default()
    };
    // Question-grounded methods draw on the train split; the topic-only
    // method never reads it, so an undersized topic should not block it.
    let split_m = match cfg.method {
        MiningMethod::Topic => 0,
        _ => cfg.train_per_topic,
    };

    let mut artifacts = ArtifactSet::new(&cfg.out_dir);
    let mut norm_paths = Vec::new();
    for country in &countries {
        let split = split_train_test(corpus, country, split_m, None)?;
        for topic in &topics {
            let set = miner::mine(gateway, corpus, &split, topic, cfg.method, &mining)?;
            let path = miner::save_norms(&norms_dir, &set)?;
            let name = format!(
                "norms/{}",
                path.file_name().unwrap_or_default().to_string_lossy()
            );
            artifacts.adopt(&name, &path)?;
            norm_paths.push(path);
        }
    }
    let manifest = artifacts.finish("mine", gateway, corpus.checksum(), countries, topics, cfg)?;
    Ok(MineOutcome { manifest, norm_paths })
}

fn load_bank(
    cfg: &RunConfig,
    countries: &[String],
    topics: &[String],
) -> Result<NormBank, Error> {
    let dir = cfg.norms_dir();
    let pairs = countries
        .iter()
        .flat_map(|c| topics.iter().map(move |t| (c.as_str(), t.as_str())));
    NormBank::load(&dir, cfg.method, pairs)
        .map_err(|e| ConfigError::NormsUnavailable(e).into())
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: AlignmentReport,
    pub manifest: RunManifest,
    pub report_path: PathBuf,
}

/// Score the model against country majorities and write `report.json`,
/// `scores.csv`, and `manifest.json`.
pub fn run_eval(gateway: &Gateway, corpus: &Corpus, cfg: &RunConfig) -> Result<EvalOutcome, Error> {
    cfg.validate()?;
    let countries = resolve_countries(corpus.countries(), &cfg.countries)?;
    let splits = build_splits(corpus, &countries, cfg.train_per_topic)?;

    let eval_cfg = EvalConfig {
        trials: cfg.trials,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        base_seed: cfg.seed,
        num_norms: cfg.num_norms,
        ..EvalConfig::default()
    };

    let bank;
    let norms = match cfg.mode {
        EvalMode::Norms => {
            bank = load_bank(cfg, &countries, corpus.topics())?;
            Some(NormSource {
                bank: &bank,
                method: cfg.method,
            })
        }
        _ => None,
    };

    let report = evaluator::run_eval(gateway, corpus, &splits, cfg.mode, norms.as_ref(), &eval_cfg)?;

    let mut artifacts = ArtifactSet::new(&cfg.out_dir);
    let report_path = artifacts.write("report.json", &to_pretty_json(&report)?)?;
    artifacts.write("scores.csv", &alignment_csv(&report)?)?;
    let manifest = artifacts.finish(
        "eval",
        gateway,
        corpus.checksum(),
        countries,
        corpus.topics().to_vec(),
        cfg,
    )?;
    Ok(EvalOutcome { report, manifest, report_path })
}

#[derive(Debug)]
pub struct CdevalOutcome {
    pub report: CdevalReport,
    pub manifest: RunManifest,
    pub report_path: PathBuf,
}

/// Score tendency agreement on the dimension benchmark and write
/// `report.json`, `scores.csv`, `answers.jsonl`, and `manifest.json`.
pub fn run_cdeval(
    gateway: &Gateway,
    cdeval: &CdevalCorpus,
    cfg: &RunConfig,
) -> Result<CdevalOutcome, Error> {
    cfg.validate()?;
    let countries = resolve_countries(cdeval.countries(), &cfg.countries)?;
    let eval_cfg = EvalConfig {
        trials: 1,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        base_seed: cfg.seed,
        ..EvalConfig::default()
    };
    let run = evaluator::run_cdeval(gateway, cdeval, &countries, &eval_cfg)?;

    let mut artifacts = ArtifactSet::new(&cfg.out_dir);
    let report_path = artifacts.write("report.json", &to_pretty_json(&run.report)?)?;
    artifacts.write("scores.csv", &cdeval_csv(&run.report)?)?;
    let mut answers = Vec::new();
    for record in &run.answers {
        let line = serde_json::to_string(record)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        answers.extend_from_slice(line.as_bytes());
        answers.push(b'\n');
    }
    artifacts.write("answers.jsonl", &answers)?;
    let manifest = artifacts.finish(
        "cdeval",
        gateway,
        cdeval.checksum(),
        countries,
        Vec::new(),
        cfg,
    )?;
    Ok(CdevalOutcome {
        report: run.report,
        manifest,
        report_path,
    })
}

#[derive(Debug)]
pub struct DistillOutcome {
    pub manifest: RunManifest,
    pub sft_records: usize,
    pub sft_fallbacks: usize,
    pub dpo_pairs: usize,
    pub dpo_skipped: usize,
    pub sft_path: PathBuf,
    pub dpo_path: PathBuf,
}

/// Synthesize the fine-tuning datasets and their training manifests.
pub fn run_distill(
    gateway: &Gateway,
    corpus: &Corpus,
    cfg: &RunConfig,
) -> Result<DistillOutcome, Error> {
    cfg.validate()?;
    let countries = resolve_countries(corpus.countries(), &cfg.countries)?;
    let splits = build_splits(corpus, &countries, cfg.train_per_topic)?;

    let bank;
    let norms = match cfg.variant {
        DistillVariant::Cnca => {
            bank = load_bank(cfg, &countries, corpus.topics())?;
            Some(&bank)
        }
        DistillVariant::Cot => None,
    };

    let distill_cfg = DistillConfig {
        rounds: cfg.rounds,
        per_round: cfg.per_round,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        base_seed: cfg.seed,
        dpo_cross_product: cfg.dpo_cross_product,
    };

    let records =
        distiller::build_sft_dataset(gateway, corpus, &splits, cfg.variant, norms, &distill_cfg)?;
    let sft_fallbacks = records
        .iter()
        .filter(|r| !r.target.starts_with("<think>"))
        .count();
    let pairs = distiller::collect_dpo_pairs(gateway, corpus, &splits, &distill_cfg)?;

    let mut artifacts = ArtifactSet::new(&cfg.out_dir);
    let sft_path = cfg.out_dir.join("sft.jsonl");
    distiller::write_jsonl(&records, &sft_path)?;
    artifacts.adopt("sft.jsonl", &sft_path)?;
    let dpo_path = cfg.out_dir.join("dpo.jsonl");
    distiller::export_dpo(&pairs.pairs, &dpo_path)?;
    artifacts.adopt("dpo.jsonl", &dpo_path)?;

    let sft_manifest_path = cfg.out_dir.join("sft_manifest.json");
    distiller::emit_training_manifest(&sft_manifest_path, TrainStage::Sft, &sft_path)?;
    artifacts.adopt("sft_manifest.json", &sft_manifest_path)?;
    let dpo_manifest_path = cfg.out_dir.join("dpo_manifest.json");
    distiller::emit_training_manifest(&dpo_manifest_path, TrainStage::Dpo, &dpo_path)?;
    artifacts.adopt("dpo_manifest.json", &dpo_manifest_path)?;

    let manifest = artifacts.finish(
        "distill",
        gateway,
        corpus.checksum(),
        countries,
        corpus.topics().to_vec(),
        cfg,
    )?;
    Ok(DistillOutcome {
        manifest,
        sft_records: records.len(),
        sft_fallbacks,
        dpo_pairs: pairs.pairs.len(),
        dpo_skipped: pairs.skipped.len(),
        sft_path,
        dpo_path,
    })
}

/// One run directory's headline numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunBrief {
    pub dir: String,
    pub mode: String,
    pub model_id: String,
    pub overall_mean: f64,
    pub invalid_rate: f64,
    pub country_means: BTreeMap<String, f64>,
}

/// Cross-run comparison; the paired test is present when exactly two runs
/// share at least two countries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: Vec<RunBrief>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_t: Option<PairedTTest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paired_countries: Vec<String>,
}

/// Read alignment reports back from run directories and compare them.
pub fn summarize_runs(dirs: &[PathBuf]) -> Result<RunSummary, Error> {
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for dir in dirs {
        let path = dir.join("report.json");
        let body = std::fs::read_to_string(&path)?;
        let report: AlignmentReport =
            serde_json::from_str(&body).map_err(|e| ConfigError::Artifact {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        runs.push(RunBrief {
            dir: dir.display().to_string(),
            mode: report.mode.to_string(),
            model_id: report.model_id.clone(),
            overall_mean: report.overall_mean,
            invalid_rate: report.invalid_rate,
            country_means: report.country_means(),
        });
        reports.push(report);
    }

    let mut paired_t = None;
    let mut paired_countries = Vec::new();
    if let [a, b] = &runs[..] {
        let common: Vec<&String> = a
            .country_means
            .keys()
            .filter(|c| b.country_means.contains_key(*c))
            .collect();
        if common.len() >= 2 {
            let xs: Vec<f64> = common.iter().map(|c| a.country_means[*c]).collect();
            let ys: Vec<f64> = common.iter().map(|c| b.country_means[*c]).collect();
            paired_t = Some(evaluator::paired_t_test(&xs, &ys)?);
            paired_countries = common.into_iter().cloned().collect();
        }
    }
    Ok(RunSummary { runs, paired_t, paired_countries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_cdeval, load_corpus};
    use crate::gateway::ScriptedBackend;
    use crate::synth;

    fn synth_setup(dir: &Path, plan: &synth::SynthPlan) -> Corpus {
        let path = dir.join("corpus.json");
        synth::write_survey_corpus(&path, plan).unwrap();
        load_corpus(&path).unwrap()
    }

    fn base_cfg(dir: &Path) -> RunConfig {
        RunConfig {
            out_dir: dir.join("out"),
            train_per_topic: 1,
            fixed_timestamp: Some(0),
            ..RunConfig::default()
        }
    }

    #[test]
    fn validate_rejects_zero_knobs() {
        let cfg = RunConfig { trials: 0, ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::BadValue { field: "trials", .. })));
        let cfg = RunConfig { temperature: f64::NAN, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gateway_from_env_rejects_record_plus_replay() {
        let dir = tempfile::tempdir().unwrap();
        let err = gateway_from_env(Some(dir.path()), Some(dir.path()), 1)
            .map(|_| ())
            .unwrap_err();
        assert_eq!(err.category(), crate::error::ErrorCategory::Config);
    }

    #[test]
    fn mine_then_eval_in_norms_mode_produces_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let plan = synth::SynthPlan { countries: 2, topics: 2, questions_per_topic: 6 };
        let corpus = synth_setup(tmp.path(), &plan);

        let cfg = base_cfg(tmp.path());
        let backend = ScriptedBackend::new().with_handler(synth::oracle_handler(&corpus));
        let gw = Gateway::new(Box::new(backend));

        let mined = run_mine(&gw, &corpus, &cfg).unwrap();
        assert_eq!(mined.norm_paths.len(), 4); // 2 countries x 2 topics
        assert!(cfg.out_dir.join("manifest.json").exists());

        // m=1 leaves one question-grounded low norm per topic.
        let eval_cfg = RunConfig {
            mode: EvalMode::Norms,
            num_norms: 1,
            out_dir: tmp.path().join("eval-out"),
            norms_dir: Some(cfg.norms_dir()),
            ..cfg.clone()
        };
        let backend = ScriptedBackend::new().with_handler(synth::oracle_handler(&corpus));
        let gw = Gateway::new(Box::new(backend));
        let out = run_eval(&gw, &corpus, &eval_cfg).unwrap();
        assert_eq!(out.report.overall_mean, 100.0);
        let csv_text = std::fs::read_to_string(eval_cfg.out_dir.join("scores.csv")).unwrap();
        // Header plus one row per country and trial.
        assert_eq!(csv_text.lines().count(), 1 + 2 * 3);
        assert!(csv_text.starts_with("country,trial,score"));
        let manifest: RunManifest = serde_json::from_str(
            &std::fs::read_to_string(eval_cfg.out_dir.join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.command, "eval");
        assert_eq!(manifest.corpus_checksum, corpus.checksum());
        assert!(manifest.artifacts.contains_key("report.json"));
        assert!(manifest.artifacts.contains_key("scores.csv"));
    }

    #[test]
    fn eval_in_norms_mode_without_mined_sets_is_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let plan = synth::SynthPlan { countries: 2, topics: 1, questions_per_topic: 6 };
        let corpus = synth_setup(tmp.path(), &plan);
        let cfg = RunConfig {
            mode: EvalMode::Norms,
            ..base_cfg(tmp.path())
        };
        let backend = ScriptedBackend::new();
        let calls = backend.call_counter();
        let gw = Gateway::new(Box::new(backend));
        let err = run_eval(&gw, &corpus, &cfg).unwrap_err();
        assert_eq!(err.category(), crate::error::ErrorCategory::Config);
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 0);
    }

    #[test]
    fn distill_writes_datasets_and_training_manifests() {
        let tmp = tempfile::tempdir().unwrap();
        let plan = synth::SynthPlan { countries: 2, topics: 1, questions_per_topic: 6 };
        let corpus = synth_setup(tmp.path(), &plan);
        let cfg = RunConfig {
            rounds: 2,
            per_round: 3,
            ..base_cfg(tmp.path())
        };
        let backend =
            ScriptedBackend::new().with_handler(synth::oracle_with_errors(&corpus, 3));
        let gw = Gateway::new(Box::new(backend));
        let out = run_distill(&gw, &corpus, &cfg).unwrap();
        assert_eq!(out.sft_records, 2); // 2 countries x 1 topic x m=1
        assert!(out.dpo_pairs >= 1);
        assert!(out.sft_path.exists());
        assert!(out.dpo_path.exists());
        let sft_manifest: distiller::TrainingManifest = serde_json::from_str(
            &std::fs::read_to_string(cfg.out_dir.join("sft_manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(sft_manifest.dataset_records, 2);
        assert_eq!(sft_manifest.lr_schedule, "cosine");
        let manifest: RunManifest = serde_json::from_str(
            &std::fs::read_to_string(cfg.out_dir.join("manifest.json")).unwrap(),
        )
        .unwrap();
        for name in ["sft.jsonl", "dpo.jsonl", "sft_manifest.json", "dpo_manifest.json"] {
            assert!(manifest.artifacts.contains_key(name), "missing {name}");
        }
    }

    #[test]
    fn cdeval_run_writes_report_and_answers() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("dims.json");
        synth::write_dimension_corpus(&path, 2, 1).unwrap();
        let cdeval = load_cdeval(&path).unwrap();
        let cfg = base_cfg(tmp.path());
        let backend =
            ScriptedBackend::new().with_handler(synth::dimension_oracle_handler(&cdeval));
        let gw = Gateway::new(Box::new(backend));
        let out = run_cdeval(&gw, &cdeval, &cfg).unwrap();
        assert_eq!(out.report.overall, 1.0);
        let answers = std::fs::read_to_string(cfg.out_dir.join("answers.jsonl")).unwrap();
        assert_eq!(answers.lines().count(), 2 * 6); // countries x items
        let csv_text = std::fs::read_to_string(cfg.out_dir.join("scores.csv")).unwrap();
        assert!(csv_text.starts_with("dimension,score"));
    }

    #[test]
    fn summarize_two_runs_pairs_country_means() {
        let tmp = tempfile::tempdir().unwrap();
        let plan = synth::SynthPlan { countries: 3, topics: 2, questions_per_topic: 6 };
        let corpus = synth_setup(tmp.path(), &plan);

        let run = |out: PathBuf, wrong_every: u64| {
            let cfg = RunConfig { out_dir: out, ..base_cfg(tmp.path()) };
            let backend = ScriptedBackend::new()
                .with_handler(synth::oracle_with_errors(&corpus, wrong_every));
            let gw = Gateway::new(Box::new(backend));
            run_eval(&gw, &corpus, &cfg).unwrap()
        };
        run(tmp.path().join("run-a"), 0);
        run(tmp.path().join("run-b"), 2);

        let summary =
            summarize_runs(&[tmp.path().join("run-a"), tmp.path().join("run-b")]).unwrap();
        assert_eq!(summary.runs.len(), 2);
        assert_eq!(summary.paired_countries.len(), 3);
        let t = summary.paired_t.expect("two runs with shared countries");
        assert_eq!(t.df, 2);
        assert_eq!(summary.runs[0].overall_mean, 100.0);
        assert!(summary.runs[1].overall_mean < 100.0);
    }
}
