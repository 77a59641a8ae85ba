//! Questionnaire corpora: the WVS-style survey corpus and the six-dimension
//! cultural benchmark corpus.
//!
//! A corpus document is plain JSON with a `schema_version` header (unknown
//! versions are rejected). Questions carry ordinal options indexed 1..K and
//! per-country answer-share distributions; the majority share is the ground
//! truth. Corpora are immutable after load and safe to share across threads.
//!
//! Tie rules are deterministic and documented: the majority answer and the
//! ranked ordering both break share ties by ascending option index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema version accepted by [`load_corpus`] and [`load_cdeval`].
pub const CORPUS_SCHEMA_VERSION: u32 = 1;

const SHARE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("corpus file {path} is not valid JSON: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported schema_version {found} (expected {CORPUS_SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("corpus contains no questions")]
    Empty,
    #[error("duplicate question id {id}")]
    DuplicateId { id: String },
    #[error("question {id}: {message}")]
    InvalidQuestion { id: String, message: String },
    #[error("question {question_id}, country {country}: {message}")]
    InvalidDistribution {
        question_id: String,
        country: String,
        message: String,
    },
    #[error("no distribution for question {question_id} in country {country}")]
    MissingDistribution {
        question_id: String,
        country: String,
    },
    #[error("unknown question id {id}")]
    UnknownQuestion { id: String },
    #[error("unknown country {country}")]
    UnknownCountry { country: String },
    #[error("topic {topic} has {available} questions for {country}, need {needed}")]
    TopicTooSmall {
        topic: String,
        country: String,
        available: usize,
        needed: usize,
    },
    #[error("selection manifest: {message}")]
    BadManifest { message: String },
}

/// A survey item with ordinal options. Option indices are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub topic: String,
    pub text: String,
    pub options: Vec<String>,
    /// Per-country answer shares, each vector of length K summing to 1.
    #[serde(default)]
    pub distributions: BTreeMap<String, Vec<f64>>,
}

impl Question {
    /// Number of options K.
    pub fn option_count(&self) -> u32 {
        self.options.len() as u32
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CorpusFile {
    schema_version: u32,
    source: String,
    countries: Vec<String>,
    topics: Vec<String>,
    questions: Vec<Question>,
}

/// An immutable, validated questionnaire corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    source: String,
    countries: Vec<String>,
    topics: Vec<String>,
    questions: Vec<Question>,
    by_id: HashMap<String, usize>,
    /// Content hash of the corpus document, for run manifests.
    checksum: String,
}

impl Corpus {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    /// Questions in stable corpus order.
    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// sha256 of the corpus document bytes.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn question(&self, id: &str) -> Result<&Question, CorpusError> {
        self.by_id
            .get(id)
            .map(|&i| &self.questions[i])
            .ok_or_else(|| CorpusError::UnknownQuestion { id: id.to_string() })
    }

    /// Question count per topic, in declared topic order.
    pub fn topic_census(&self) -> Vec<(String, usize)> {
        self.topics
            .iter()
            .map(|t| {
                let n = self.questions.iter().filter(|q| &q.topic == t).count();
                (t.clone(), n)
            })
            .collect()
    }

    fn shares(&self, question_id: &str, country: &str) -> Result<&[f64], CorpusError> {
        let q = self.question(question_id)?;
        q.distributions
            .get(country)
            .map(|s| s.as_slice())
            .ok_or_else(|| CorpusError::MissingDistribution {
                question_id: question_id.to_string(),
                country: country.to_string(),
            })
    }
}

/// Train/test partition of a corpus for one country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub country: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Train samples per topic.
    pub m: usize,
}

/// Load and validate a corpus document.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: CorpusFile = serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.display().to_string(),
        source,
    })?;
    let checksum = crate::gateway::sha256_hex(text.as_bytes());
    corpus_from_file(file, checksum)
}

fn corpus_from_file(file: CorpusFile, checksum: String) -> Result<Corpus, CorpusError> {
    if file.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(CorpusError::SchemaVersion {
            found: file.schema_version,
        });
    }
    if file.questions.is_empty() {
        return Err(CorpusError::Empty);
    }
    let topic_set: HashSet<&str> = file.topics.iter().map(String::as_str).collect();
    let country_set: HashSet<&str> = file.countries.iter().map(String::as_str).collect();

    let mut by_id = HashMap::with_capacity(file.questions.len());
    for (i, q) in file.questions.iter().enumerate() {
        if by_id.insert(q.id.clone(), i).is_some() {
            return Err(CorpusError::DuplicateId { id: q.id.clone() });
        }
        validate_question(q, &topic_set, &country_set)?;
    }

    let corpus = Corpus {
        source: file.source,
        countries: file.countries,
        topics: file.topics,
        questions: file.questions,
        by_id,
        checksum,
    };
    log::info!(
        "loaded corpus '{}': {} questions, {} topics, {} countries",
        corpus.source,
        corpus.len(),
        corpus.topics.len(),
        corpus.countries.len()
    );
    for (topic, n) in corpus.topic_census() {
        log::debug!("  topic '{topic}': {n} questions");
    }
    Ok(corpus)
}

fn validate_question(
    q: &Question,
    topics: &HashSet<&str>,
    countries: &HashSet<&str>,
) -> Result<(), CorpusError> {
    let fail = |message: String| CorpusError::InvalidQuestion {
        id: q.id.clone(),
        message,
    };
    if q.id.trim().is_empty() {
        return Err(fail("empty id".into()));
    }
    if q.text.trim().is_empty() {
        return Err(fail("empty text".into()));
    }
    if q.options.len() < 2 {
        return Err(fail(format!("needs at least 2 options, has {}", q.options.len())));
    }
    if !topics.contains(q.topic.as_str()) {
        return Err(fail(format!("topic '{}' not declared in header", q.topic)));
    }
    for (country, shares) in &q.distributions {
        if !countries.contains(country.as_str()) {
            return Err(CorpusError::InvalidDistribution {
                question_id: q.id.clone(),
                country: country.clone(),
                message: "country not declared in header".into(),
            });
        }
        validate_shares(&q.id, country, shares, q.options.len())?;
    }
    Ok(())
}

fn validate_shares(
    question_id: &str,
    country: &str,
    shares: &[f64],
    k: usize,
) -> Result<(), CorpusError> {
    let fail = |message: String| CorpusError::InvalidDistribution {
        question_id: question_id.to_string(),
        country: country.to_string(),
        message,
    };
    if shares.len() != k {
        return Err(fail(format!("expected {k} shares, got {}", shares.len())));
    }
    for (i, &s) in shares.iter().enumerate() {
        if !(0.0..=1.0).contains(&s) || !s.is_finite() {
            return Err(fail(format!("share {} for option {} out of [0,1]", s, i + 1)));
        }
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
        return Err(fail(format!("shares sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Majority answer (1-based option index) for a question in a country.
/// Ties break to the lowest option index.
pub fn ground_truth(corpus: &Corpus, question_id: &str, country: &str) -> Result<u32, CorpusError> {
    let shares = corpus.shares(question_id, country)?;
    let mut best = 0usize;
    for (i, &s) in shares.iter().enumerate() {
        if s > shares[best] {
            best = i;
        }
    }
    Ok(best as u32 + 1)
}

/// Options ranked by answer share, descending; ties by ascending index.
pub fn ranked_answers(
    corpus: &Corpus,
    question_id: &str,
    country: &str,
) -> Result<Vec<(u32, f64)>, CorpusError> {
    let shares = corpus.shares(question_id, country)?;
    let mut ranked: Vec<(u32, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as u32 + 1, s))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Deterministic train/test split for one country.
///
/// With a selection manifest the train set is exactly the manifest (validated
/// to hold m existing ids per topic, each with a distribution for the
/// country). Without one, the first m ids per topic in stable corpus order
/// are taken. The remainder of the country's distributed questions is test.
pub fn split_train_test(
    corpus: &Corpus,
    country: &str,
    m: usize,
    selection_manifest: Option<&[String]>,
) -> Result<CorpusSplit, CorpusError> {
    if !corpus.countries.iter().any(|c| c == country) {
        return Err(CorpusError::UnknownCountry {
            country: country.to_string(),
        });
    }

    // Questions with a distribution for this country, per topic, corpus order.
    let mut per_topic: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for q in &corpus.questions {
        if q.distributions.contains_key(country) {
            per_topic.entry(q.topic.as_str()).or_default().push(&q.id);
        }
    }

    let train: Vec<String> = match selection_manifest {
        Some(ids) => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            let mut seen = HashSet::new();
            for id in ids {
                let q = corpus.question(id)?;
                if !q.distributions.contains_key(country) {
                    return Err(CorpusError::BadManifest {
                        message: format!("id {id} has no distribution for {country}"),
                    });
                }
                if !seen.insert(id.as_str()) {
                    return Err(CorpusError::BadManifest {
                        message: format!("id {id} listed twice"),
                    });
                }
                *counts.entry(q.topic.as_str()).or_default() += 1;
            }
            for (topic, &n) in &counts {
                if n != m {
                    return Err(CorpusError::BadManifest {
                        message: format!("topic '{topic}' has {n} manifest ids, expected m={m}"),
                    });
                }
            }
            ids.to_vec()
        }
        None => {
            let mut train = Vec::new();
            // Topic order follows the header declaration.
            for topic in &corpus.topics {
                let ids = per_topic.get(topic.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                if ids.len() < m {
                    return Err(CorpusError::TopicTooSmall {
                        topic: topic.clone(),
                        country: country.to_string(),
                        available: ids.len(),
                        needed: m,
                    });
                }
                train.extend(ids.iter().take(m).map(|s| s.to_string()));
            }
            train
        }
    };

    let train_set: HashSet<&str> = train.iter().map(String::as_str).collect();
    let test: Vec<String> = corpus
        .questions
        .iter()
        .filter(|q| q.distributions.contains_key(country) && !train_set.contains(q.id.as_str()))
        .map(|q| q.id.clone())
        .collect();

    Ok(CorpusSplit {
        country: country.to_string(),
        train,
        test,
        m,
    })
}

// ---------------------------------------------------------------------------
// Dimension benchmark corpus
// ---------------------------------------------------------------------------

/// The six cultural dimensions of the benchmark corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    LTO,
    MAS,
    PDI,
    IDV,
    IVR,
    UAI,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::LTO,
        Dimension::MAS,
        Dimension::PDI,
        Dimension::IDV,
        Dimension::IVR,
        Dimension::UAI,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::LTO => "LTO",
            Dimension::MAS => "MAS",
            Dimension::PDI => "PDI",
            Dimension::IDV => "IDV",
            Dimension::IVR => "IVR",
            Dimension::UAI => "UAI",
        }
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which pole of a dimension an option encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    High,
    Low,
}

/// A binary-choice benchmark item: each option maps to one pole of the
/// dimension, and `ground_tendency` gives the human-preferred option per
/// country.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdevalItem {
    pub id: String,
    pub dimension: Dimension,
    pub text: String,
    pub options: Vec<String>,
    /// Option index (as string key "1"/"2") to pole.
    pub tendency_map: BTreeMap<String, Pole>,
    /// Country to the option index matching the country's tendency.
    pub ground_tendency: BTreeMap<String, u32>,
}

impl CdevalItem {
    /// Pole encoded by a 1-based option index.
    pub fn pole_of(&self, index: u32) -> Option<Pole> {
        self.tendency_map.get(&index.to_string()).copied()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CdevalFile {
    schema_version: u32,
    source: String,
    countries: Vec<String>,
    items: Vec<CdevalItem>,
}

/// Validated dimension benchmark corpus.
#[derive(Debug, Clone)]
pub struct CdevalCorpus {
    source: String,
    countries: Vec<String>,
    items: Vec<CdevalItem>,
    checksum: String,
}

impl CdevalCorpus {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn items(&self) -> &[CdevalItem] {
        &self.items
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Items of one dimension, corpus order.
    pub fn dimension_items(&self, d: Dimension) -> Vec<&CdevalItem> {
        self.items.iter().filter(|i| i.dimension == d).collect()
    }

    /// Item count per dimension, in canonical dimension order.
    pub fn dimension_census(&self) -> Vec<(Dimension, usize)> {
        Dimension::ALL
            .iter()
            .map(|&d| (d, self.items.iter().filter(|i| i.dimension == d).count()))
            .collect()
    }
}

/// Load and validate a dimension benchmark document.
pub fn load_cdeval(path: &Path) -> Result<CdevalCorpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: CdevalFile = serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.display().to_string(),
        source,
    })?;
    let checksum = crate::gateway::sha256_hex(text.as_bytes());
    cdeval_from_file(file, checksum)
}

fn cdeval_from_file(file: CdevalFile, checksum: String) -> Result<CdevalCorpus, CorpusError> {
    if file.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(CorpusError::SchemaVersion {
            found: file.schema_version,
        });
    }
    if file.items.is_empty() {
        return Err(CorpusError::Empty);
    }
    let country_set: HashSet<&str> = file.countries.iter().map(String::as_str).collect();
    let mut seen = HashSet::new();
    for item in &file.items {
        if !seen.insert(item.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: item.id.clone(),
            });
        }
        validate_cdeval_item(item, &country_set)?;
    }
    let corpus = CdevalCorpus {
        source: file.source,
        countries: file.countries,
        items: file.items,
        checksum,
    };
    for (d, n) in corpus.dimension_census() {
        if n == 0 {
            log::warn!("dimension {d} has no items; it will be skipped in averages");
        }
    }
    Ok(corpus)
}

fn validate_cdeval_item(item: &CdevalItem, countries: &HashSet<&str>) -> Result<(), CorpusError> {
    let fail = |message: String| CorpusError::InvalidQuestion {
        id: item.id.clone(),
        message,
    };
    if item.text.trim().is_empty() {
        return Err(fail("empty text".into()));
    }
    if item.options.len() != 2 {
        return Err(fail(format!(
            "binary-choice item needs exactly 2 options, has {}",
            item.options.len()
        )));
    }
    let p1 = item.tendency_map.get("1");
    let p2 = item.tendency_map.get("2");
    match (p1, p2) {
        (Some(a), Some(b)) if a != b && item.tendency_map.len() == 2 => {}
        _ => {
            return Err(fail(
                "tendency_map must map options 1 and 2 to the two distinct poles".into(),
            ))
        }
    }
    for (country, &idx) in &item.ground_tendency {
        if !countries.contains(country.as_str()) {
            return Err(fail(format!("ground_tendency country '{country}' not declared")));
        }
        if !(1..=2).contains(&idx) {
            return Err(fail(format!("ground_tendency for {country} is {idx}, must be 1 or 2")));
        }
    }
    Ok(())
}
